"""Seeded synthetic studies: FDR and power of every method under BH.

Each replicate draws, for n features,

* sigma2_b ~ |N(6, sd 2)| and lambda from one of three laws,
  sigma2_a = lambda * sigma2_b;
* a fixed number ceil((1 - pi0) n) of alternatives at random positions, with
  mu_b = 0 and mu_a ~ N(0, 12 sigma2_a); nulls have mu_a = mu_b = 0;
* K_A and K_B normal replicates per feature, reduced to summaries.

Random numbers come from Philox streams keyed by (seed, replicate, purpose,
column). Observation column j of group B always uses the same stream, so
raising K_B appends data without disturbing anything drawn before.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .distributions import Tolerance
from .errors import ConfigurationError, EpbError
from .mtp import benjamini_hochberg
from .npmle import NPMLE_TOL, fit_dv_prior, fit_vr_prior
from .pvalues import MethodId, pvalue_arrays
from .summary import FeatureTable, summarize_matrix

__all__ = [
    "LambdaLaw",
    "SimulationScenario",
    "SimulationReport",
    "ReportEntry",
    "generate",
    "simulate_summaries",
    "n_alternatives",
    "run_replicate",
    "run_study",
    "ASSUMPTIONS",
]

ASSUMPTIONS = {
    "sigma2_b_law": "absolute value of a normal with mean 6 and variance 4 (standard deviation 2)",
    "alternatives": "fixed count ceil((1 - pi0) * n), positions shuffled per replicate",
    "p_values": "two-sided",
}


class LambdaLaw(enum.Enum):
    UNEQUAL_F = "unequal"  # 2 * F(8, 12)
    EQUAL_ONE = "equal"  # lambda = 1
    DIFFUSE_LOGUNIF = "diffuse"  # exp(Unif[-5, 5])


class _Stream(enum.IntEnum):
    SIGMA = 1
    LAMBDA = 2
    EFFECT = 3
    PLACEMENT = 4
    OBS_A = 5
    OBS_B = 6


@dataclass(frozen=True)
class SimulationScenario:
    k_a: int = 3
    k_b: int = 3
    lambda_law: LambdaLaw = LambdaLaw.UNEQUAL_F
    n: int = 5000
    pi0: float = 0.9
    effect_var_multiplier: float = 12.0
    sigma_b_mean: float = 6.0
    sigma_b_sd: float = 2.0
    seed: int = 0
    reps: int = 50
    alpha: float = 0.1

    def __post_init__(self):
        if isinstance(self.lambda_law, str):
            object.__setattr__(self, "lambda_law", LambdaLaw(self.lambda_law))
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if not (0 < self.pi0 <= 1):
            raise ConfigurationError("pi0 must lie in (0, 1]")
        if self.k_a < 2 or self.k_b < 2:
            raise ConfigurationError("each group needs at least 2 replicates")
        if self.reps < 1:
            raise ConfigurationError("reps must be at least 1")
        if not (0 < self.alpha < 1):
            raise ConfigurationError("alpha must lie in (0, 1)")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.effect_var_multiplier < 0 or self.sigma_b_sd < 0:
            raise ConfigurationError("variance parameters must be nonnegative")

    @property
    def name(self) -> str:
        return self.lambda_law.value

    def echo(self) -> dict:
        d = asdict(self)
        d["lambda_law"] = self.lambda_law.value
        return d


def n_alternatives(n: int, pi0: float) -> int:
    # round first so that e.g. (1 - 0.9) * 5000 = 500.00000000000006 gives 500
    return int(math.ceil(round(n * (1.0 - pi0), 9)))


def _rng(seed, rep, purpose, col=0):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep), int(purpose), int(col)))
    return np.random.Generator(np.random.Philox(ss))


def simulate_summaries(mu_a, mu_b, sig2a, sig2b, k_a, k_b, seed, rep=0) -> FeatureTable:
    """Draw normal replicates around given means/variances and summarize them."""
    mu_a = np.asarray(mu_a, dtype=float)
    n = mu_a.size
    mu_b = np.broadcast_to(np.asarray(mu_b, dtype=float), (n,))
    sd_a = np.sqrt(np.broadcast_to(np.asarray(sig2a, dtype=float), (n,)))
    sd_b = np.sqrt(np.broadcast_to(np.asarray(sig2b, dtype=float), (n,)))
    xa = np.empty((n, k_a))
    xb = np.empty((n, k_b))
    for j in range(k_a):
        xa[:, j] = mu_a + sd_a * _rng(seed, rep, _Stream.OBS_A, j).standard_normal(n)
    for j in range(k_b):
        xb[:, j] = mu_b + sd_b * _rng(seed, rep, _Stream.OBS_B, j).standard_normal(n)
    return summarize_matrix(xa, xb, feature_id=[f"f{i}" for i in range(n)])


def draw_parameters(scenario: SimulationScenario, rep_index: int) -> dict:
    """True means, variances and alternative flags for one replicate."""
    sc, n = scenario, scenario.n
    sig2b = np.abs(sc.sigma_b_mean + sc.sigma_b_sd * _rng(sc.seed, rep_index, _Stream.SIGMA).standard_normal(n))
    g = _rng(sc.seed, rep_index, _Stream.LAMBDA)
    if sc.lambda_law is LambdaLaw.UNEQUAL_F:
        lam = 2.0 * g.f(8, 12, n)
    elif sc.lambda_law is LambdaLaw.EQUAL_ONE:
        lam = np.ones(n)
    else:
        lam = np.exp(g.uniform(-5.0, 5.0, n))
    sig2a = lam * sig2b
    truth = np.zeros(n, dtype=bool)
    n_alt = n_alternatives(n, sc.pi0)
    if n_alt:
        truth[_rng(sc.seed, rep_index, _Stream.PLACEMENT).permutation(n)[:n_alt]] = True
    z = _rng(sc.seed, rep_index, _Stream.EFFECT).standard_normal(n)
    mu_a = np.where(truth, np.sqrt(sc.effect_var_multiplier * sig2a) * z, 0.0)
    return dict(lam=lam, sig2a=sig2a, sig2b=sig2b, mu_a=mu_a, mu_b=np.zeros(n), truth=truth)


def generate(scenario: SimulationScenario, rep_index: int):
    """Features and alternative flags for replicate ``rep_index``.

    Returns
    -------
    features : FeatureTable
        A sequence of :class:`~epbayes.summary.FeatureSummary`.
    truth : ndarray of bool
        True where the feature is an alternative.
    """
    par = draw_parameters(scenario, rep_index)
    tab = simulate_summaries(
        par["mu_a"], par["mu_b"], par["sig2a"], par["sig2b"], scenario.k_a, scenario.k_b, scenario.seed, rep_index
    )
    return tab, par["truth"]


def fdr_power(rejected, truth):
    rejected = np.asarray(rejected, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    r = int(rejected.sum())
    v = int((rejected & ~truth).sum())
    n_alt = int(truth.sum())
    fdr = v / max(1, r)
    power = (r - v) / n_alt if n_alt else 0.0
    return fdr, power


@dataclass(frozen=True)
class FitSettings:
    grid_size: int = 1000
    grid_size_2d: int = 80
    tol: Tolerance = NPMLE_TOL
    lam: float = 1.0


def run_replicate(scenario: SimulationScenario, rep_index: int, methods, settings: FitSettings = FitSettings()):
    """FDR and power of each method on one replicate: ``{method: (fdr, power)}``."""
    tab, truth = generate(scenario, rep_index)
    vr = dv = None
    ok = ~tab.degenerate
    if MethodId.VREPB in methods:
        vr = fit_vr_prior(
            tab.var_a[ok] / tab.var_b[ok], tab.nu_a[ok], tab.nu_b[ok], settings.grid_size, settings.tol
        ).prior
    if MethodId.DVEPB in methods:
        dv = fit_dv_prior(
            tab.var_a[ok], tab.var_b[ok], tab.nu_a[ok], tab.nu_b[ok],
            settings.grid_size_2d, settings.grid_size_2d, settings.tol,
        ).prior
    p = pvalue_arrays(tab, methods, vr, dv, lam=settings.lam)
    out = {}
    for m in methods:
        rejected = np.zeros(len(tab), dtype=bool)
        good = ~np.isnan(p[m])
        rejected[good] = benjamini_hochberg(p[m][good], scenario.alpha).rejected
        out[m] = fdr_power(rejected, truth)
    return out


@dataclass
class ReportEntry:
    scenario: str
    method: str
    k_a: int
    k_b: int
    fdr: float
    fdr_se: float
    power: float
    power_se: float
    reps: int
    fdr_reps: List[float] = field(default_factory=list)
    power_reps: List[float] = field(default_factory=list)


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


@dataclass
class SimulationReport:
    scenarios: List[SimulationScenario]
    entries: List[ReportEntry]
    assumptions: dict = field(default_factory=lambda: dict(ASSUMPTIONS))

    def get(self, method: MethodId, k_b: int, scenario: Optional[str] = None) -> ReportEntry:
        for e in self.entries:
            if e.method == method.value and e.k_b == k_b and (scenario is None or e.scenario == scenario):
                return e
        raise KeyError((method, k_b, scenario))

    def to_json(self) -> dict:
        series = {}
        for e in self.entries:
            s = series.setdefault(e.scenario, {}).setdefault(
                e.method, {"k_a": [], "k_b": [], "fdr": [], "fdr_se": [], "power": [], "power_se": []}
            )
            for key in s:
                s[key].append(getattr(e, key))
        return {
            "scenarios": [s.echo() for s in self.scenarios],
            "assumptions": self.assumptions,
            "series": series,
            "entries": [asdict(e) for e in self.entries],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps(self.to_json(), indent=2))
            fh.write("\n")

    TSV_COLUMNS = ("scenario", "method", "k_a", "k_b", "fdr", "fdr_se", "power", "power_se")

    def tsv_lines(self):
        yield "\t".join(self.TSV_COLUMNS)
        for e in self.entries:
            yield "\t".join(
                [e.scenario, e.method, str(e.k_a), str(e.k_b)]
                + ["%.17g" % getattr(e, c) for c in ("fdr", "fdr_se", "power", "power_se")]
            )

    def write_tsv(self, path):
        with open(path, "w") as fh:
            for line in self.tsv_lines():
                fh.write(line + "\n")


def run_study(
    scenarios: Sequence[SimulationScenario],
    methods: Iterable[MethodId],
    settings: FitSettings = FitSettings(),
    threads: int = 1,
) -> SimulationReport:
    """Run every scenario for its number of replicates and summarize.

    Replicates are independent; with ``threads > 1`` they are evaluated
    concurrently, and since each one draws from its own streams the report
    is identical to a serial run.
    """
    methods = list(dict.fromkeys(methods))
    entries = []
    for sc in scenarios:

        def one(r, sc=sc):
            try:
                return run_replicate(sc, r, methods, settings)
            except EpbError as e:
                raise type(e)(f"scenario {sc.name} (k_a={sc.k_a}, k_b={sc.k_b}), replicate {r}: {e}") from e

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                per_rep = list(ex.map(one, range(sc.reps)))
        else:
            per_rep = [one(r) for r in range(sc.reps)]
        for m in methods:
            fdrs = [res[m][0] for res in per_rep]
            pows = [res[m][1] for res in per_rep]
            fdr, fdr_se = _mean_se(fdrs)
            pw, pw_se = _mean_se(pows)
            entries.append(ReportEntry(sc.name, m.value, sc.k_a, sc.k_b, fdr, fdr_se, pw, pw_se, sc.reps, fdrs, pows))
    return SimulationReport(list(scenarios), entries)
