"""Desk-scale transducer sequence-training laboratory.

A strictly monotonic neural transducer (one output symbol, blank or label,
per input frame) together with the machinery needed to study sequence
discriminative training and language-model integration on synthetic data:
lattice-based cross-entropy training, MMI and MBR objectives over exact,
N-best, and lattice-free hypothesis spaces, internal-language-model
estimation and subtraction, and fusion beam decoding.  Every derived
quantity is small enough to be checked against brute-force enumeration or
finite differences, and the test suite does exactly that.
"""

__version__ = "0.1.0"
