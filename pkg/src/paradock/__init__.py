"""Rigid protein docking through a shared fitted interface surface."""

from .errors import (
    ConfigError,
    CorrespondenceError,
    DegenerateConfiguration,
    DegenerateHead,
    DegenerateMatrix,
    EmptyStructure,
    NearSingular,
    NoContacts,
    NonFiniteLoss,
    NotPSD,
    ParadockError,
    ParseError,
    TooFewPoints,
)
from .geometry import (
    Quadric,
    RigidTransform,
    StandardParaboloid,
    compose_relative,
    kabsch,
    kabsch2d,
    polar_rotation,
    random_rotation,
    random_transform,
    refinement_rotation,
    rotation_angle,
    rotation_geodesic,
    sqrt_psd3,
    to_general_form,
    transform_quadric,
)
from .pdbio import (
    ProteinStructure,
    load_pdb,
    parse_pdb,
    save_pdb,
    split_complex,
    to_pdb,
    write_complex,
)
from .graphs import (
    CONTACT_THRESHOLD,
    GraphConfig,
    PocketSet,
    ProteinGraph,
    build_graph,
    extract_pockets,
    positional_embedding,
    rbf_expand,
    track_pockets,
)
from .model import ModelConfig, PairEncoder, init_parameters
from .checkpoint import load_arrays, load_model, save_arrays, save_model
from .docking import DockingResult, InterfacePrediction, dock, predict_se3
from .losses import (
    LossReport,
    LossWeights,
    dock_loss,
    fit_loss,
    overlap_loss,
    refinement_loss,
    total_loss,
)
from .metrics import ComplexCoords, MetricReport, aggregate, crmsd, dockq, irmsd
from .synth import SynthComplex, generate_complex, load_truth, oracle_dock
from .training import TrainConfig, augment, load_dataset, loss_gradient, train_loop

__version__ = "0.1.0"
