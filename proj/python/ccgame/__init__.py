"""Chance-constrained LQG dynamic games: feedback GNE by dual ascent."""

from ._ccgame import (
    CcgameError,
    FeedbackPolicy,
    Problem,
    SolveResult,
    __version__,
    central_mpc,
    file_fingerprint,
    inverse_normal_cdf,
    normal_cdf,
    rollout,
    solve,
    wilson_interval,
)

__all__ = [
    "CcgameError",
    "FeedbackPolicy",
    "Problem",
    "SolveResult",
    "central_mpc",
    "file_fingerprint",
    "inverse_normal_cdf",
    "normal_cdf",
    "rollout",
    "solve",
    "wilson_interval",
]
