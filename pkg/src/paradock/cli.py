"""Command-line surface: dock, train, eval, synth, inspect.

Exit codes: 0 success, 1 degenerate numerical state (non-finite loss or a
degenerate pose head), 2 missing/unreadable/ill-formed inputs, 3 residue
correspondence mismatch, 4 no interface contacts. Outputs are only written
after the whole computation succeeds, so failures leave no partial files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from . import checkpoint as ckpt
from . import metrics as metrics_mod
from . import synth as synth_mod
from .docking import dock, make_interfaces
from .errors import (
    ConfigError,
    CorrespondenceError,
    DegenerateHead,
    EmptyStructure,
    NoContacts,
    NonFiniteLoss,
    ParadockError,
    ParseError,
)
from .geometry import compose_relative
from .graphs import GraphConfig, build_graph
from .pdbio import load_pdb, split_complex, write_complex
from .training import TrainConfig, load_dataset, train_loop

REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_DEGENERATE = 1
EXIT_INPUT = 2
EXIT_CORRESPONDENCE = 3
EXIT_NO_CONTACTS = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _require_files(*paths) -> str | None:
    for p in paths:
        if not os.path.isfile(p):
            return f"no such file: {p}"
    return None


def _transform_json(t) -> dict:
    q, tr = t.numpy()
    return {"rotation": q.tolist(), "translation": tr.tolist()}


def _quadric_json(q) -> dict:
    return {
        "A": q.A.detach().numpy().tolist(),
        "b": q.b.detach().numpy().tolist(),
        "c": float(q.c),
    }


def _interface_json(iface) -> dict:
    std = iface.standard
    return {
        "standard": {
            "lambda1": float(std.lambda1),
            "lambda2": float(std.lambda2),
            "beta": float(std.beta),
        },
        "ligand": {
            "placement": _transform_json(iface.ligand.transform),
            "quadric": _quadric_json(iface.ligand.general),
        },
        "receptor": {
            "placement": _transform_json(iface.receptor.transform),
            "quadric": _quadric_json(iface.receptor.general),
        },
    }


def _graph_config_from_meta(meta: dict) -> GraphConfig:
    if "graph_config" in meta:
        return GraphConfig(**meta["graph_config"])
    mc = meta.get("model_config", {})
    kwargs = {}
    if "embed" in mc:
        kwargs["pos_dim"] = mc["embed"]
    if "edge_dim" in mc:
        kwargs["rbf_size"] = mc["edge_dim"] - 4
    return GraphConfig(**kwargs)


def _sniff_params(path):
    """Distinguish a checkpoint from a synthetic truth JSON by content."""
    with open(path, "rb") as fh:
        head = fh.read(len(ckpt.MAGIC) + 1)
    if head.decode("ascii", errors="replace").startswith(ckpt.MAGIC):
        return "model", ckpt.load_model(path)
    try:
        truth = synth_mod.load_truth(path)
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError):
        raise ConfigError(
            f"{path}: neither a checkpoint nor a synthetic truth file"
        ) from None
    return "oracle", truth


def _dock_single(ligand_path, receptor_path, params, mode, refine: bool):
    """Dock one pair; returns (complex text, report dict). Raises on failure."""
    ligand = load_pdb(ligand_path)
    receptor = load_pdb(receptor_path)
    if mode == "oracle":
        truth = params
        transform = compose_relative(truth.ligand_interface, truth.receptor_interface)
        interfaces = make_interfaces(
            truth.standard, truth.ligand_interface, truth.receptor_interface
        )
        theta = 0.0
    else:
        model, meta = params
        gcfg = _graph_config_from_meta(meta)
        g_lig = build_graph(ligand, gcfg)
        g_rec = build_graph(receptor, gcfg)
        with torch.no_grad():
            result = dock(g_lig, g_rec, model, refine=refine, training=False)
        transform, interfaces, theta = result.transform, result.interfaces, float(result.theta)
    docked = transform.apply(ligand.coords).detach().numpy()
    text, renames = write_complex(ligand, receptor, ligand_coords=docked)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "dock",
        "mode": mode,
        "refine": refine,
        "inputs": {"ligand": str(ligand_path), "receptor": str(receptor_path)},
        "n_ligand": ligand.n_residues,
        "n_receptor": receptor.n_residues,
        "transform": _transform_json(transform),
        "theta": theta,
        "interface": _interface_json(interfaces),
        "chain_renames": renames,
    }
    return text, report


def _write_report(path, report: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_dock(args) -> int:
    batch = os.path.isdir(args.ligand) and os.path.isdir(args.receptor)
    if not batch:
        msg = _require_files(args.ligand, args.receptor, args.params)
        if msg:
            return _fail(EXIT_INPUT, msg)
    elif not os.path.isfile(args.params):
        return _fail(EXIT_INPUT, f"no such file: {args.params}")
    try:
        mode, params = _sniff_params(args.params)
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))
    refine = not args.no_refine

    try:
        if not batch:
            text, report = _dock_single(args.ligand, args.receptor, params, mode, refine)
            with open(args.out, "w", encoding="ascii") as fh:
                fh.write(text)
            if args.report:
                _write_report(args.report, report)
            return EXIT_OK

        names = sorted(n for n in os.listdir(args.ligand) if n.endswith(".pdb"))
        missing = [n for n in names if not os.path.isfile(os.path.join(args.receptor, n))]
        if not names or missing:
            return _fail(EXIT_INPUT, f"unpaired batch inputs: {missing or 'no pdb files'}")
        os.makedirs(args.out, exist_ok=True)
        if args.report:
            os.makedirs(args.report, exist_ok=True)

        def run(name):
            return _dock_single(
                os.path.join(args.ligand, name), os.path.join(args.receptor, name),
                params, mode, refine,
            )

        if args.threads > 1:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                outputs = list(pool.map(run, names))
        else:
            outputs = [run(n) for n in names]
        for name, (text, report) in zip(names, outputs):
            with open(os.path.join(args.out, name), "w", encoding="ascii") as fh:
                fh.write(text)
            if args.report:
                _write_report(os.path.join(args.report, name[:-4] + ".json"), report)
        return EXIT_OK
    except (ParseError, EmptyStructure, ConfigError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    except DegenerateHead as exc:
        return _fail(EXIT_DEGENERATE, f"degenerate pose head: {exc}")


def cmd_train(args) -> int:
    if not os.path.isdir(args.data):
        return _fail(EXIT_INPUT, f"no such directory: {args.data}")
    try:
        cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.no_refine:
            cfg = dataclasses.replace(cfg, refine=False)
        samples = load_dataset(args.data, cfg.graph_config())
    except (ConfigError, ParseError) as exc:
        return _fail(EXIT_INPUT, str(exc))

    if len(samples) >= 5 and cfg.val_fraction > 0:
        n_val = max(1, round(cfg.val_fraction * len(samples)))
        train_set, val_set = samples[:-n_val], samples[-n_val:]
    else:
        train_set, val_set = samples, []

    try:
        result = train_loop(train_set, val_set, cfg, args.out)
    except NonFiniteLoss as exc:
        return _fail(EXIT_DEGENERATE, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))

    if result.no_progress:
        print("warning: all loss weights are zero; training cannot progress",
              file=sys.stderr)
    final_path = os.path.join(args.out, "model_final.ckpt")
    ckpt.save_model(final_path, result.model,
                    extra_meta={"graph_config": dataclasses.asdict(cfg.graph_config())})
    summary = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "train",
        "steps": result.steps_run,
        "best_epoch": result.best_epoch,
        "best_val": result.best_val,
        "stopped_early": result.stopped_early,
        "checkpoints": [p for (_, _, p) in result.checkpoints],
        "final_model": final_path,
        "log": result.log_path,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _eval_single(pred_path, ref_path, split: str):
    ref_l, ref_r = split_complex(load_pdb(ref_path), split)
    pred_l, pred_r = split_complex(load_pdb(pred_path), split)
    ref = metrics_mod.ComplexCoords(ref_l.coords, ref_r.coords)
    pred = metrics_mod.ComplexCoords(pred_l.coords, pred_r.coords)
    return metrics_mod.dockq(ref, pred)


def cmd_eval(args) -> int:
    batch = os.path.isdir(args.pred) and os.path.isdir(args.ref)
    try:
        if not batch:
            msg = _require_files(args.pred, args.ref)
            if msg:
                return _fail(EXIT_INPUT, msg)
            report = _eval_single(args.pred, args.ref, args.split)
            print(json.dumps(report.to_dict(), sort_keys=True))
            return EXIT_OK
        names = sorted(n for n in os.listdir(args.pred) if n.endswith(".pdb"))
        missing = [n for n in names if not os.path.isfile(os.path.join(args.ref, n))]
        if not names or missing:
            return _fail(EXIT_INPUT, f"unpaired batch inputs: {missing or 'no pdb files'}")
        reports = [
            _eval_single(os.path.join(args.pred, n), os.path.join(args.ref, n), args.split)
            for n in names
        ]
        if args.csv:
            metrics_mod.write_metrics_csv(args.csv, [n[:-4] for n in names], reports)
        print(json.dumps(metrics_mod.aggregate(reports), sort_keys=True))
        return EXIT_OK
    except (ParseError, EmptyStructure, ConfigError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    except CorrespondenceError as exc:
        return _fail(EXIT_CORRESPONDENCE, str(exc))
    except NoContacts as exc:
        return _fail(EXIT_NO_CONTACTS, str(exc))


def cmd_synth(args) -> int:
    if args.n < 1:
        return _fail(EXIT_INPUT, f"--n must be >= 1, got {args.n}")
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    written = []
    for i in range(args.n):
        cplx = synth_mod.generate_complex(rng, f"synth{i:04d}")
        written.extend(synth_mod.write_complex_files(cplx, args.out))
    print(json.dumps({
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "synth",
        "n": args.n,
        "out": str(args.out),
        "files": [os.path.basename(p) for p in written],
    }, sort_keys=True))
    return EXIT_OK


def cmd_inspect(args) -> int:
    msg = _require_files(args.params)
    if msg:
        return _fail(EXIT_INPUT, msg)
    try:
        arrays, meta = ckpt.load_arrays(args.params)
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(json.dumps({"meta": meta}, sort_keys=True))
    total = 0
    for name, arr in arrays.items():
        shape = "x".join(str(d) for d in arr.shape)
        print(f"{name} {shape} {arr.size}")
        total += arr.size
    print(f"total {len(arrays)} arrays, {total} elements")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed override (default: 0, or the config value)")
    common.add_argument("--threads", type=int, default=1,
                        help="parallelism degree for batch work")
    common.add_argument("--config", default=None,
                        help="JSON config file (training options)")

    parser = argparse.ArgumentParser(
        prog="paradock",
        description="Rigid protein docking via a shared fitted interface surface.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dock", parents=[common],
                       help="dock a ligand onto a receptor")
    p.add_argument("--ligand", required=True, help="ligand PDB (or directory)")
    p.add_argument("--receptor", required=True, help="receptor PDB (or directory)")
    p.add_argument("--params", required=True,
                   help="model checkpoint, or a synthetic truth JSON for oracle docking")
    p.add_argument("--out", required=True, help="output complex PDB (or directory)")
    p.add_argument("--report", default=None, help="JSON report path (or directory)")
    p.add_argument("--no-refine", action="store_true",
                   help="skip the in-plane rotation refinement")
    p.set_defaults(func=cmd_dock)

    p = sub.add_parser("train", parents=[common], help="train on bound complexes")
    p.add_argument("--data", required=True, help="directory of *_ligand_bound/_receptor_bound pairs")
    p.add_argument("--out", required=True, help="output directory for checkpoints and logs")
    p.add_argument("--no-refine", action="store_true",
                   help="train with the in-plane refinement disabled")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score predictions against references")
    p.add_argument("--pred", required=True, help="predicted complex PDB (or directory)")
    p.add_argument("--ref", required=True, help="reference complex PDB (or directory)")
    p.add_argument("--split", required=True,
                   help="chain assignment LIGCHAINS:RECCHAINS, e.g. A:B")
    p.add_argument("--csv", default=None, help="CSV output path (batch mode)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic complexes")
    p.add_argument("--n", type=int, required=True, help="number of complexes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", parents=[common], help="list checkpoint contents")
    p.add_argument("--params", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    torch.set_num_threads(1)
    try:
        return args.func(args)
    except ParadockError as exc:
        return _fail(EXIT_DEGENERATE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
