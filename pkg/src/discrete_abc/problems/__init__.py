"""Benchmark problems: QMR-DT, binary neural networks and tabular architecture search."""

from .binnn import (
    BinNetSpec,
    BinNNProblem,
    LabeledDataset,
    binnn_error,
    binnn_predict,
    boltzmann_log_prior,
    ensemble_vote,
    load_idx,
    load_mnist_binary,
    synthetic_polar_dataset,
    write_idx,
)
from .nas import NasLookupError, NasProblem, NasTable, nas_decode, nas_encode, nas_query, nas_synth_table
from .qmr import (
    QmrDtModel,
    QmrProblem,
    load_instance,
    qmr_distance,
    qmr_exact_posterior,
    qmr_log_likelihood,
    qmr_log_prior,
    qmr_sample_instance,
    qmr_simulate,
    save_instance,
)
