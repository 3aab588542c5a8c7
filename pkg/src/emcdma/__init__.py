"""Pilot-free doubly iterative DS-CDMA receiver with EM estimation of the
fading coefficient and interference PSD."""
from .channel import LinkParams, MultipathProfile, jakes_gains, make_layout, realize_channel, transmit, transmit_multipath
from .demod import extrinsic_metrics, hard_demod_bootstrap, priors_from_llrs
from .estimation import (CsiEstimate, EMChannelEstimator, EmConfig, SoftState, blind_init_method1,
                         complexity_counts, em_iterate, likelihood_ratios, pace_counts, pace_estimate,
                         symbol_expectation, update_C, update_I0)
from .ira import IRA_PROFILE, CodeEnsemble, DegreeProfile, build_code, decode, encode
from .receiver import FrameDiagnostics, IterativeReceiver, ReceiverMode, rake_combine, run_frame
from .scenarios import ScenarioConfig, builtin_scenarios
from .simulate import ResultRow, emit_results, run_scenario
from .waveform import despread, gen_gold, qpsk_map, qpsk_unmap, spread

__version__ = "0.1.0"
