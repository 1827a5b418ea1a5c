"""
Uplink spectral efficiency of multi-cell massive spatial-modulation MIMO.

Closed-form lower bounds for MR and ZF combining, a Monte-Carlo channel
simulator that checks them, and sweeps that pick the rate-maximising
number of UE transmit antennas.
"""

__version__ = "0.1.0"

from .bounds import (SeResult, SinrProfile, SystemParams, db_to_linear, detection_probability,
                     inv_sinr_fixed, inv_sinr_mr_fixed, inv_sinr_random, inv_sinr_zf_fixed,
                     se_fixed_lb, se_from_sigma, se_lower_bound_fixed, se_random_lb,
                     se_single_antenna)
from .correlation import TxCorrelation, bessel_j0, jakes_matrix, max_spacing, optimize_spacing
from .exceptions import (ConfigurationError, DegenerateCorrelationError, DomainError,
                         InfeasibleError, NumericalError, PlacementError, SmMimoError)
from .geometry import (AttenuationProfile, CellLayout, InterferenceMoments, attenuation,
                       build_layout, place_ues, spatial_moments)
from .montecarlo import detection_pc_oracle, mutual_information, sinr_lemma1
from .sweep import (Scenario, SweepGrid, SweepResult, evaluate_grid, optimize_n,
                    tightness_report)
