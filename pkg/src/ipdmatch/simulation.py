"""Two-study simulation benchmark for the matching and weighting methods.

Each replication draws a pair of studies with 15 latent Gaussian
covariates in three compound-symmetric blocks (within-block correlations
0.3 / 0.5 / 0.7, independent across blocks). Study B's means are shifted
by +1 on X1, X8 and X15. A normal response depends on six covariates
(X1, X3, X8, X9, X11, X15) either on the latent continuous scale or, in
the alternative mode, on the categorized scale of the four categorized
influencers. Ten covariates are then cut at fixed normal quantiles:
seven to binary (X1, X2, X6, X7, X11, X12, X13) and three to factors
with 4 / 3 / 5 levels (X3, X8, X14); X4, X5, X9, X10, X15 stay
continuous.

Matching and propensity weighting run on the categorized scale. Every
replication is keyed by (master seed, replication index) through a
splittable seed sequence, so results are identical no matter how many
workers processed the replications.
"""

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import __version__ as _version
from .data import Covariate, CovariateSchema, CovariateTable, encode
from .errors import DegenerateEqualitiesError, RankDeficientDesignError
from .inference import DistributionSummary, difference_summary
from .linalg import cholesky
from .matching import CONSTRAINED, UNCONSTRAINED, MatchSpec, match
from .propensity import fit_logistic, pooled_weights

__all__ = [
    "SimulationConfig",
    "SimulationSummary",
    "correlation_matrix",
    "draw_latent_pair",
    "generate_pair",
    "run_study",
]

LATENT_CONTINUOUS = "latent-continuous"
POST_CATEGORIZATION = "post-categorization"

METHODS = ("unconstrained", "constrained", "propensity")

_LEVEL_LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

_DEFAULT_SHIFT = (1.0, 0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0, 0, 1.0)

# Cut points are normal quantiles at these probabilities; one probability
# gives a binary variable, k probabilities give k+1 levels.
_DEFAULT_CUTS = {
    "X1": (0.238,),
    "X2": (0.312,),
    "X3": (0.12, 0.335, 0.68),
    "X6": (0.439,),
    "X7": (0.581,),
    "X8": (0.23, 0.56),
    "X11": (0.607,),
    "X12": (0.712,),
    "X13": (0.842,),
    "X14": (0.18, 0.3, 0.56, 0.72),
}

_DEFAULT_RESPONSE = {
    "X1": 0.3,
    "X3": 0.2,
    "X8": 0.3,
    "X9": 0.1,
    "X11": 0.2,
    "X15": 0.1,
}


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of the data-generating process and the study run."""

    n_per_study: int = 300
    block_sizes: tuple[int, ...] = (5, 5, 5)
    rho: tuple[float, ...] = (0.3, 0.5, 0.7)
    mean_shift: tuple[float, ...] = _DEFAULT_SHIFT
    cut_probabilities: dict = field(default_factory=lambda: dict(_DEFAULT_CUTS))
    response_coefficients: dict = field(
        default_factory=lambda: dict(_DEFAULT_RESPONSE)
    )
    noise_sd: float = 1.0
    response_scale: str = LATENT_CONTINUOUS
    category_scores: dict | None = None  # var -> per-level scores; None = level index
    replications: int = 1000
    seed: int | None = None

    @property
    def n_variables(self) -> int:
        return sum(self.block_sizes)

    def __post_init__(self):
        if self.n_per_study < 1:
            raise ValueError("n_per_study must be at least 1")
        if len(self.rho) != len(self.block_sizes):
            raise ValueError("need one rho per block")
        for m, r in zip(self.block_sizes, self.rho):
            # Compound-symmetric block eigenvalues: 1+(m-1)rho and 1-rho.
            if abs(r) >= 1.0 or 1.0 + (m - 1) * r <= 0.0:
                raise ValueError(f"block correlation {r} is not positive definite")
        if len(self.mean_shift) != self.n_variables:
            raise ValueError("mean_shift length must match the number of variables")
        names = {f"X{i + 1}" for i in range(self.n_variables)}
        for var, probs in self.cut_probabilities.items():
            if var not in names:
                raise ValueError(f"unknown variable {var!r} in cut_probabilities")
            ps = tuple(probs)
            if not all(0.0 < p < 1.0 for p in ps) or list(ps) != sorted(set(ps)):
                raise ValueError(
                    f"cut probabilities for {var!r} must be strictly increasing in (0,1)"
                )
        for var in self.response_coefficients:
            if var not in names:
                raise ValueError(f"unknown variable {var!r} in response_coefficients")
        if self.response_scale not in (LATENT_CONTINUOUS, POST_CATEGORIZATION):
            raise ValueError(f"unknown response_scale {self.response_scale!r}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    def to_json_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["cut_probabilities"] = {
            k: list(v) for k, v in self.cut_probabilities.items()
        }
        return out


def correlation_matrix(cfg: SimulationConfig) -> np.ndarray:
    """Block compound-symmetric correlation matrix of the latent scale."""
    p = cfg.n_variables
    corr = np.eye(p)
    start = 0
    for size, r in zip(cfg.block_sizes, cfg.rho):
        corr[start : start + size, start : start + size] = r
        start += size
    np.fill_diagonal(corr, 1.0)
    return corr


def _rng_for(seed: int, replication: int) -> np.random.Generator:
    """Independent stream keyed by (master seed, replication index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    )


RNG_DESCRIPTION = "numpy PCG64 seeded via SeedSequence(master_seed, spawn_key=(replication,))"


def draw_latent_pair(
    cfg: SimulationConfig, replication: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Latent Gaussian draws (study A, study B) plus the response noise.

    Exposed so the generator itself can be validated (sample covariance,
    shifts) without going through categorization.
    """
    if cfg.seed is None:
        raise ValueError("config needs a master seed")
    rng = _rng_for(cfg.seed, replication)
    L = cholesky(correlation_matrix(cfg)).lower
    n, p = cfg.n_per_study, cfg.n_variables
    xa = rng.standard_normal((n, p)) @ L.T
    xb = rng.standard_normal((n, p)) @ L.T + np.asarray(cfg.mean_shift)
    noise = rng.standard_normal(2 * n) * cfg.noise_sd
    return xa, xb, noise


def _level_index(x: np.ndarray, probs: tuple[float, ...]) -> np.ndarray:
    cuts = norm.ppf(np.asarray(probs))
    return np.searchsorted(cuts, x, side="left")


def generate_pair(cfg: SimulationConfig, replication: int) -> CovariateTable:
    """One simulated pair of studies as a typed covariate table.

    The draw order (study A covariates, study B covariates, response
    noise) is fixed, so two configs differing only in ``response_scale``
    generate identical covariates for the same seed and replication.
    """
    xa, xb, noise = draw_latent_pair(cfg, replication)
    latent = np.vstack([xa, xb])
    n2 = latent.shape[0]

    levels: dict[str, np.ndarray] = {}
    for var, probs in cfg.cut_probabilities.items():
        j = int(var[1:]) - 1
        levels[var] = _level_index(latent[:, j], tuple(probs))

    y = np.zeros(n2)
    for var, coef in cfg.response_coefficients.items():
        j = int(var[1:]) - 1
        if cfg.response_scale == POST_CATEGORIZATION and var in levels:
            idx = levels[var]
            if cfg.category_scores and var in cfg.category_scores:
                scores = np.asarray(cfg.category_scores[var], dtype=np.float64)
                vals = scores[idx]
            else:
                vals = idx.astype(np.float64)
        else:
            vals = latent[:, j]
        y += coef * vals
    y += noise

    covs: list[Covariate] = []
    columns: dict[str, np.ndarray] = {}
    for j in range(cfg.n_variables):
        name = f"X{j + 1}"
        if name in levels:
            n_levels = len(cfg.cut_probabilities[name]) + 1
            if n_levels == 2:
                covs.append(Covariate(name, "binary"))
                columns[name] = levels[name].astype(np.int16)
            else:
                covs.append(
                    Covariate(name, "categorical", tuple(_LEVEL_LABELS[:n_levels]))
                )
                columns[name] = levels[name].astype(np.int16)
        else:
            covs.append(Covariate(name, "continuous"))
            columns[name] = latent[:, j].copy()

    study = np.concatenate(
        [np.zeros(cfg.n_per_study, dtype=np.int8), np.ones(cfg.n_per_study, dtype=np.int8)]
    )
    return CovariateTable(
        schema=CovariateSchema(tuple(covs)),
        study=study,
        columns=columns,
        response=y,
        study_labels=("IPD A", "IPD B"),
    )


def _weighted_diff(y: np.ndarray, study: np.ndarray, w0, w1) -> float:
    """Weighted mean response of study A minus study B."""
    y0, y1 = y[study == 0], y[study == 1]
    return float(w0 @ y0 / w0.sum() - w1 @ y1 / w1.sum())


def _replicate(cfg: SimulationConfig, replication: int) -> dict:
    """All per-replication records; None marks a failed (NA) method.

    Data-degenerate failures (a covariate constant at different values in
    the two studies, a rank-deficient propensity design) count as NA for
    the affected method rather than aborting the study.
    """
    table = generate_pair(cfg, replication)
    dm = encode(table)
    y, study = table.response, table.study
    n = cfg.n_per_study
    uniform = np.full(n, 1.0 / n)

    rec: dict = {"replication": replication}
    rec["ydiff_observed"] = _weighted_diff(y, study, uniform, uniform)

    def record_na(method: str) -> None:
        for key in ("ess0", "ess1", "maxw", "ydiff"):
            rec[f"{key}_{method}"] = None

    for method, mode in (("unconstrained", UNCONSTRAINED), ("constrained", CONSTRAINED)):
        try:
            sol = match(dm, MatchSpec(mode=mode))
        except DegenerateEqualitiesError:
            record_na(method)
            continue
        if sol.matched:
            rec[f"ess0_{method}"] = sol.ess0
            rec[f"ess1_{method}"] = sol.ess1
            rec[f"maxw_{method}"] = sol.largest_standardized_weight()
            rec[f"ydiff_{method}"] = _weighted_diff(y, study, sol.w0, sol.w1)
        else:
            record_na(method)

    try:
        psw = pooled_weights(fit_logistic(dm), nu="observed")
    except RankDeficientDesignError:
        record_na("propensity")
    else:
        rec["ess0_propensity"] = psw.ess0
        rec["ess1_propensity"] = psw.ess1
        rec["maxw_propensity"] = psw.largest_standardized_weight()
        rec["ydiff_propensity"] = _weighted_diff(y, study, psw.w0, psw.w1)
    return rec


@dataclass
class SimulationSummary:
    """Aggregate statistics of a simulation run.

    ``ess`` maps method -> (study A summary, study B summary);
    ``max_weight`` and ``ydiff`` map method -> summary, the latter also
    keyed by ``"observed"``. ``no_solution`` counts failed replications
    per method.
    """

    config: SimulationConfig
    ess: dict[str, tuple[DistributionSummary, DistributionSummary]]
    max_weight: dict[str, DistributionSummary]
    ydiff: dict[str, DistributionSummary]
    no_solution: dict[str, int]
    records: list[dict]

    def to_json_dict(self) -> dict:
        return {
            "tool_version": _version,
            "rng": RNG_DESCRIPTION,
            "config": self.config.to_json_dict(),
            "ess": {
                m: {"study0": a.to_json_dict(), "study1": b.to_json_dict()}
                for m, (a, b) in self.ess.items()
            },
            "max_weight": {m: s.to_json_dict() for m, s in self.max_weight.items()},
            "ydiff": {m: s.to_json_dict() for m, s in self.ydiff.items()},
            "no_solution": dict(self.no_solution),
        }


def run_study(
    cfg: SimulationConfig,
    threads: int = 1,
    progress=None,
) -> SimulationSummary:
    """Run the full replication study.

    Replications are independent and individually seeded, so the summary
    is identical for any ``threads`` value. ``progress`` is called with
    the completed count every 100 replications.
    """
    if cfg.seed is None:
        raise ValueError("config needs a master seed")
    reps = cfg.replications
    records: list[dict | None] = [None] * reps

    if threads <= 1:
        for r in range(reps):
            records[r] = _replicate(cfg, r)
            if progress and (r + 1) % 100 == 0:
                progress(r + 1)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            done = 0
            for rec in pool.map(_replicate, [cfg] * reps, range(reps), chunksize=8):
                records[rec["replication"]] = rec
                done += 1
                if progress and done % 100 == 0:
                    progress(done)

    def dist(key: str) -> DistributionSummary:
        return difference_summary([rec[key] for rec in records])

    ess = {m: (dist(f"ess0_{m}"), dist(f"ess1_{m}")) for m in METHODS}
    maxw = {m: dist(f"maxw_{m}") for m in METHODS}
    ydiff = {"observed": dist("ydiff_observed")}
    ydiff.update({m: dist(f"ydiff_{m}") for m in METHODS})
    no_solution = {m: ess[m][0].na_count for m in METHODS}

    return SimulationSummary(
        config=cfg,
        ess=ess,
        max_weight=maxw,
        ydiff=ydiff,
        no_solution=no_solution,
        records=records,
    )
