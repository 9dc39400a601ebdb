"""Numerical verification of analytic estimates and of the cutting-annuli combinatorics."""

from .annuli import (AnnuliIndexSet, all_cutting_annuli, characterized_preimage, is_cutting_annuli,
                     precut_image, preimage_brute_force, preimage_characterize, reduce_to_annuli,
                     reduction_partition, weak_correlation_delta)
from .estimates import (DecorrelationReport, SlopeReport, decorrelation_check, freezing_decay,
                        freezing_exponent, small_indicator_bound)
from .inequalities import InequalityReport, KahaneMode, girsanov_check, kahane_check, run_inequality_suite
from .suites import SUITES, CheckRow, run_suite

__all__ = [
    "AnnuliIndexSet", "CheckRow", "DecorrelationReport", "InequalityReport", "KahaneMode", "SUITES",
    "SlopeReport", "all_cutting_annuli", "characterized_preimage", "decorrelation_check",
    "freezing_decay", "freezing_exponent", "girsanov_check", "is_cutting_annuli", "kahane_check",
    "precut_image", "preimage_brute_force", "preimage_characterize", "reduce_to_annuli",
    "reduction_partition", "run_inequality_suite", "run_suite", "small_indicator_bound",
    "weak_correlation_delta",
]
