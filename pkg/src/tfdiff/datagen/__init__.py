"""Synthetic labeled RF datasets and their on-disk layout."""

from tfdiff.datagen.base import CLASS_FIELD, SyntheticGenerator
from tfdiff.datagen.fmcw import FmcwChirpGenerator, gen_fmcw_chirp
from tfdiff.datagen.io import condition_vocab, dataset_digest, load_dataset, read_index, write_dataset
from tfdiff.datagen.multipath import MultipathCsiGenerator, gen_multipath_csi
from tfdiff.datagen.oracle import dft_peak_classifier, generate_dataset, make_generator

__all__ = [
    "CLASS_FIELD",
    "FmcwChirpGenerator",
    "MultipathCsiGenerator",
    "SyntheticGenerator",
    "condition_vocab",
    "dataset_digest",
    "dft_peak_classifier",
    "gen_fmcw_chirp",
    "gen_multipath_csi",
    "generate_dataset",
    "load_dataset",
    "make_generator",
    "read_index",
    "write_dataset",
]
