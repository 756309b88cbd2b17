"""Equity market simulation, functionally generated portfolios, pathwise
performance decomposition, arbitrage horizon bounds, and cost-aware
backtesting."""

from .analytics import (
    DecompositionLedger,
    PalWongLedger,
    diversity_entropy_measures,
    diversity_measure,
    excess_growth_from_relative,
    excess_growth_rate,
    local_time_profile,
    master_decomposition,
    palwong_decomposition,
    rank_master_decomposition,
    realized_covariance,
    realized_market_diagnostics,
    regime_checks,
    relative_covariance,
    relative_entropy,
    relative_log_wealth,
    shannon_entropy,
    turnover_estimate,
)
from .backtest import (
    BacktestReport,
    CostModel,
    RebalancePolicy,
    load_caps_csv,
    rebalance_decision,
    run_backtest,
)
from .bounds import HorizonBound, horizon_bound, neg_p_floor, pathwise_ra_check
from .generators import (
    Generator,
    combine_generators,
    constant_generator,
    entropy_generator,
    generator_from_config,
    incomplete_gamma_generator,
    large_stock_generator,
    power_generator,
    rank_power_generator,
)
from .kernels import backend_name
from .markets import (
    ItoMarketSpec,
    MarketPath,
    SimGrid,
    atlas_spec,
    fkk_diverse_spec,
    gbm_spec,
    gen_vsm_spec,
    hybrid_atlas_spec,
    load_path_csv,
    market_weights,
    save_path_csv,
    simulate_paths,
    vsm_spec,
)
from .rules import (
    Bf08Rule,
    FgpRule,
    MirrorRule,
    PortfolioRule,
    ShortTermArbitrageRule,
    StaticRule,
    StoppedDwpRule,
    make_rule,
    short_term_q,
)
from .weights import (
    dwp_weights,
    ewp_weights,
    fgp_weights,
    fk05_mirror_dwp,
    gamma_shape_weights,
    q_mirror,
    rank_dwp_weights,
    rank_fgp_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "Bf08Rule",
    "CostModel",
    "DecompositionLedger",
    "FgpRule",
    "Generator",
    "HorizonBound",
    "ItoMarketSpec",
    "MarketPath",
    "MirrorRule",
    "PalWongLedger",
    "PortfolioRule",
    "RebalancePolicy",
    "ShortTermArbitrageRule",
    "SimGrid",
    "StaticRule",
    "StoppedDwpRule",
    "atlas_spec",
    "backend_name",
    "combine_generators",
    "constant_generator",
    "diversity_entropy_measures",
    "diversity_measure",
    "dwp_weights",
    "entropy_generator",
    "ewp_weights",
    "excess_growth_from_relative",
    "excess_growth_rate",
    "fgp_weights",
    "fk05_mirror_dwp",
    "fkk_diverse_spec",
    "gamma_shape_weights",
    "gbm_spec",
    "gen_vsm_spec",
    "generator_from_config",
    "horizon_bound",
    "hybrid_atlas_spec",
    "incomplete_gamma_generator",
    "large_stock_generator",
    "load_caps_csv",
    "load_path_csv",
    "local_time_profile",
    "make_rule",
    "market_weights",
    "master_decomposition",
    "neg_p_floor",
    "palwong_decomposition",
    "pathwise_ra_check",
    "power_generator",
    "q_mirror",
    "rank_dwp_weights",
    "rank_fgp_weights",
    "rank_master_decomposition",
    "rank_power_generator",
    "realized_covariance",
    "realized_market_diagnostics",
    "rebalance_decision",
    "regime_checks",
    "relative_covariance",
    "relative_entropy",
    "relative_log_wealth",
    "run_backtest",
    "save_path_csv",
    "shannon_entropy",
    "short_term_q",
    "simulate_paths",
    "turnover_estimate",
    "vsm_spec",
]
