"""Complex sequences, transforms, preprocessing, metrics and the CSEQ1 format."""

from tfdiff.signal.cseq import decode_cseq, encode_cseq, read_cseq, write_cseq
from tfdiff.signal.metrics import complex_ssim, snr_db
from tfdiff.signal.sequence import (
    ComplexSequence,
    Spectrum,
    dft,
    idft,
    normalize_power,
    preprocess,
    resample,
)

__all__ = [
    "ComplexSequence",
    "Spectrum",
    "complex_ssim",
    "decode_cseq",
    "dft",
    "encode_cseq",
    "idft",
    "normalize_power",
    "preprocess",
    "read_cseq",
    "resample",
    "snr_db",
    "write_cseq",
]
