"""Elicitation: from a data-variability statement to concrete prior
parameters.

The chain: a likelihood-specific pseudo-variance gives the bound c, a
Monte Carlo solve of P[b V* <= c] = pi0 gives the base-prior scale b,
and composing with the component's quadratic-form weights gives the full
design-adjusted prior.  Everything is deterministic given the seed; the
Monte Carlo contract is that results depend only on (seed, mc_draws,
chunk_size), never on thread count.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde, norm

from . import __version__
from .priors import DsdParams, TwoF0Params, dsd_cdf_quantile, twoF0_sample
from .qf import gamma_approx
from .structure import DesignMatrix, StructureSpec, qf_weights, spectral_split

__all__ = [
    "ComponentPrior",
    "CrossTerm",
    "ElicitationSpec",
    "LikelihoodKind",
    "PredictorCheckReport",
    "ScaleSolution",
    "build_dsd_prior",
    "predictor_prior_check",
    "pseudo_variance",
    "solve_scale",
    "variance_share_draws",
]

_LIKELIHOOD_KINDS = ("gaussian", "binomial_logit", "binomial_probit", "user_supplied")


@dataclass(frozen=True)
class LikelihoodKind:
    """A likelihood family plus the one summary statistic its
    pseudo-variance needs: the response sample variance for gaussian,
    the response mean for the binomial links, or the bound itself."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in _LIKELIHOOD_KINDS:
            raise ValueError(f"unknown likelihood kind {self.kind!r}; expected one of {_LIKELIHOOD_KINDS}")
        value = float(self.value)
        if not math.isfinite(value):
            raise ValueError(f"statistic must be finite, got {value!r}")
        if self.kind in ("gaussian", "user_supplied") and value <= 0.0:
            raise ValueError(f"{self.kind} statistic must be > 0, got {value!r}")
        if self.kind in ("binomial_logit", "binomial_probit") and not 0.0 < value < 1.0:
            raise ValueError(f"{self.kind} mean must lie strictly inside (0, 1), got {value!r}")
        object.__setattr__(self, "value", value)

    @classmethod
    def gaussian(cls, sample_variance):
        return cls("gaussian", sample_variance)

    @classmethod
    def binomial_logit(cls, mean):
        return cls("binomial_logit", mean)

    @classmethod
    def binomial_probit(cls, mean):
        return cls("binomial_probit", mean)

    @classmethod
    def user_supplied(cls, c):
        return cls("user_supplied", c)


def pseudo_variance(kind):
    """The variability bound c implied by a likelihood family.

    gaussian uses the response sample variance directly; the binomial
    links use the variance of the latent predictor scale implied by the
    observed mean: 1/(m(1-m)) for logit, m(1-m)/phi(Phi^-1(m))^2 for
    probit."""
    if not isinstance(kind, LikelihoodKind):
        raise TypeError(f"expected LikelihoodKind, got {type(kind).__name__}")
    if kind.kind == "binomial_logit":
        return 1.0 / (kind.value * (1.0 - kind.value))
    if kind.kind == "binomial_probit":
        density = float(norm.pdf(norm.ppf(kind.value)))
        return kind.value * (1.0 - kind.value) / (density * density)
    return kind.value


@dataclass(frozen=True)
class ElicitationSpec:
    """Inputs of the scale solve: predictor length n (benchmark shape
    and rate are both (n-1)/2), base-prior exponents, the probability
    statement P[b V* <= c] = pi0, and the Monte Carlo budget."""

    n: int
    c: float
    p: float = 0.5
    q: float = 1.5
    pi0: float = 0.5
    mc_draws: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ValueError(f"n must be >= 2, got {n}")
        object.__setattr__(self, "n", n)
        for name in ("c", "p", "q"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)
        pi0 = float(self.pi0)
        if not 0.0 < pi0 < 1.0:
            raise ValueError(f"pi0 must lie strictly inside (0, 1), got {pi0!r}")
        object.__setattr__(self, "pi0", pi0)
        mc_draws = int(self.mc_draws)
        if mc_draws < 1:
            raise ValueError(f"mc_draws must be >= 1, got {mc_draws}")
        object.__setattr__(self, "mc_draws", mc_draws)
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class ScaleSolution:
    """Result of the Monte Carlo scale solve: b = c / q_hat with q_hat
    the empirical pi0-quantile of the unit-scale variance share, plus
    the quantile-density estimate of b's Monte Carlo standard error."""

    b: float
    standard_error: float
    quantile: float
    pi0: float
    c: float
    mc_draws: int
    warnings: tuple = ()


def solve_scale(spec):
    """Solve P[b V* <= c] = pi0 for b by simulating the unit-scale
    variance share V* and inverting its empirical quantile.

    Deterministic per (seed, mc_draws).  Budgets under 10^4 draws return
    a warning-carrying result rather than an error."""
    if not isinstance(spec, ElicitationSpec):
        raise TypeError(f"expected ElicitationSpec, got {type(spec).__name__}")
    shape = 0.5 * (spec.n - 1)
    marginal = TwoF0Params(alpha=shape, beta=shape, b=1.0, p=spec.p, q=spec.q)
    draws = twoF0_sample(marginal, spec.mc_draws, spec.seed)
    q_hat = float(np.quantile(draws, spec.pi0))
    if not (math.isfinite(q_hat) and q_hat > 0.0):
        raise ValueError(f"degenerate empirical quantile {q_hat!r}; cannot solve for b")
    b = spec.c / q_hat
    # quantile density estimated on log scale, where the draw
    # distribution has no heavy tail to inflate the KDE bandwidth
    log_draws = np.log(draws[draws > 0.0])
    log_density = float(gaussian_kde(log_draws)(math.log(q_hat))[0])
    density = log_density / q_hat
    se_q = math.sqrt(spec.pi0 * (1.0 - spec.pi0) / spec.mc_draws) / density
    warnings = ()
    if spec.mc_draws < 10_000:
        warnings = (
            f"mc_draws={spec.mc_draws} is below 10000; the Monte Carlo error of b may dominate",
        )
    return ScaleSolution(
        b=b,
        standard_error=b * se_q / q_hat,
        quantile=q_hat,
        pi0=spec.pi0,
        c=spec.c,
        mc_draws=spec.mc_draws,
        warnings=warnings,
    )


@dataclass(frozen=True)
class ComponentPrior:
    """A component's elicited prior: the distribution parameters, the
    quadratic-form weights they came from, the map from spherical
    innovations to predictor-scale effects (columns span the structure's
    range space), the scale solve, and provenance for reproducibility."""

    params: DsdParams
    weights: object
    effect_map: np.ndarray
    scale: ScaleSolution
    provenance: dict = field(repr=False)
    label: str = ""


def build_dsd_prior(design, structure, elic):
    """Compose the full pipeline for one component: quadratic-form
    weights -> two-moment Gamma approximation -> Monte Carlo scale solve
    -> design-adjusted prior parameters.

    Improper structures are automatically put under the null-space
    constraint.  The returned ComponentPrior carries the DsdParams plus
    everything needed to audit or redo the computation."""
    if not isinstance(design, DesignMatrix):
        raise TypeError(f"design must be DesignMatrix, got {type(design).__name__}")
    if not isinstance(structure, StructureSpec):
        raise TypeError(f"structure must be StructureSpec, got {type(structure).__name__}")
    if not isinstance(elic, ElicitationSpec):
        raise TypeError(f"elic must be ElicitationSpec, got {type(elic).__name__}")
    if elic.n != design.n:
        raise ValueError(
            f"elicitation n={elic.n} does not match the design's predictor length {design.n}"
        )
    constrained = structure.rank_deficiency > 0
    weights = qf_weights(design, structure, constrained=constrained)
    approx = gamma_approx(weights)
    solution = solve_scale(elic)
    shape = 0.5 * (elic.n - 1)
    params = DsdParams(
        alpha=shape,
        beta=shape,
        alpha_tilde=approx.alpha_tilde,
        beta_tilde=approx.beta_tilde,
        b=solution.b,
        p=elic.p,
        q=elic.q,
    )
    split = spectral_split(structure)
    effect_map = design.values @ (split.range_basis * split.range_eigs**-0.5)
    effect_map.setflags(write=False)
    provenance = {
        "version": __version__,
        "weights_sha256": hashlib.sha256(np.ascontiguousarray(weights.weights).tobytes()).hexdigest(),
        "zero_count": weights.zero_count,
        "constrained": constrained,
        "seed": elic.seed,
        "mc_draws": elic.mc_draws,
        "pi0": elic.pi0,
        "c": elic.c,
        "quantile": solution.quantile,
        "b_standard_error": solution.standard_error,
    }
    return ComponentPrior(
        params=params,
        weights=weights,
        effect_map=effect_map,
        scale=solution,
        provenance=provenance,
        label=f"{design.kind}+{structure.label}",
    )


def variance_share_draws(theta, count, seed, curve=None):
    """Monte Carlo draws of a component's variance share under the
    two-moment Gamma approximation: scale from the design-adjusted
    prior, then Gamma(alpha_tilde, rate beta_tilde / scale).  Pass a
    prebuilt evaluator as ``curve`` to amortize construction."""
    count = int(count)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if curve is None:
        curve = dsd_cdf_quantile(theta)
    rng = np.random.default_rng(seed)
    u = np.maximum(rng.random(count), 2.0**-53)
    s = curve._inverse_table(u)
    return rng.gamma(theta.alpha_tilde, s / theta.beta_tilde, size=count)


@dataclass(frozen=True)
class CrossTerm:
    """Monte Carlo mean of one cross-covariance share between two
    components, with its standard error and 3-SE band verdict."""

    first: int
    second: int
    mean: float
    se: float
    within_band: bool


@dataclass(frozen=True)
class PredictorCheckReport:
    """Decomposition of the linear predictor's prior variance share into
    per-component shares and pairwise cross terms, against the benchmark
    prediction: total = (number of components) x benchmark mean."""

    component_means: np.ndarray
    component_ses: np.ndarray
    cross_terms: tuple
    total_mean: float
    total_se: float
    benchmark_mean: float
    benchmark_se: float
    expected_total: float
    total_within_band: bool
    crosses_within_band: bool

    @property
    def passed(self):
        return self.total_within_band and self.crosses_within_band


def predictor_prior_check(components, mc_draws, seed, chunk_size=16384):
    """Verify, by simulation, that independent components under their
    design-adjusted priors add up: E[V_eta] = k x E[benchmark share]
    with every pairwise cross term centered at zero.

    Effects are drawn exactly (spherical innovations through each
    component's effect map, scaled by a prior draw), so the check
    exercises the full chain rather than the Gamma approximation.  Every
    component needs q > 1, else the prior mean is infinite.  Results
    depend only on (seed, mc_draws, chunk_size)."""
    components = list(components)
    if not components:
        raise ValueError("need at least one component")
    mc_draws = int(mc_draws)
    if mc_draws < 2:
        raise ValueError(f"mc_draws must be >= 2, got {mc_draws}")
    chunk_size = int(chunk_size)
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    ref = components[0].params
    for comp in components:
        t = comp.params
        if t.q <= 1.0:
            raise ValueError(
                f"component has q={t.q!r} <= 1: the prior mean of its variance share is infinite"
            )
        if (t.alpha, t.beta, t.b, t.p, t.q) != (ref.alpha, ref.beta, ref.b, ref.p, ref.q):
            raise ValueError("components do not share a common benchmark (alpha, beta, b, p, q)")
    n = components[0].effect_map.shape[0]
    if any(comp.effect_map.shape[0] != n for comp in components):
        raise ValueError("components disagree on predictor length")

    curves = [dsd_cdf_quantile(comp.params) for comp in components]
    k = len(components)
    pairs = [(j, l) for j in range(k) for l in range(j + 1, k)]
    per_comp = [[] for _ in range(k)]
    per_pair = [[] for _ in pairs]
    totals = []
    rng = np.random.default_rng(seed)
    denom = n - 1.0
    done = 0
    while done < mc_draws:
        m = min(chunk_size, mc_draws - done)
        etas = []
        for comp, curve in zip(components, curves):
            u = np.maximum(rng.random(m), 2.0**-53)
            s = curve._inverse_table(u)
            g = rng.standard_normal((comp.effect_map.shape[1], m))
            eta = comp.effect_map @ g
            eta *= np.sqrt(s)[None, :]
            eta -= eta.mean(axis=0, keepdims=True)
            etas.append(eta)
        for j, eta in enumerate(etas):
            per_comp[j].append(np.einsum("ij,ij->j", eta, eta) / denom)
        for idx, (j, l) in enumerate(pairs):
            per_pair[idx].append(np.einsum("ij,ij->j", etas[j], etas[l]) / denom)
        combined = sum(etas)
        totals.append(np.einsum("ij,ij->j", combined, combined) / denom)
        done += m

    # benchmark mean under the same budget, from the same stream
    w = rng.beta(ref.p, ref.q, size=mc_draws)
    sigma2 = ref.b * (w / (1.0 - w))
    bench = rng.gamma(ref.alpha, sigma2 / ref.beta, size=mc_draws)

    def mean_se(chunks):
        x = np.concatenate(chunks) if isinstance(chunks, list) else chunks
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))

    comp_stats = [mean_se(c) for c in per_comp]
    total_mean, total_se = mean_se(totals)
    bench_mean, bench_se = mean_se(bench)
    cross_terms = []
    for idx, (j, l) in enumerate(pairs):
        mean, se = mean_se(per_pair[idx])
        cross_terms.append(
            CrossTerm(first=j, second=l, mean=mean, se=se, within_band=abs(mean) <= 3.0 * se)
        )
    expected_total = k * bench_mean
    gap_se = math.sqrt(total_se**2 + (k * bench_se) ** 2)
    return PredictorCheckReport(
        component_means=np.array([s[0] for s in comp_stats]),
        component_ses=np.array([s[1] for s in comp_stats]),
        cross_terms=tuple(cross_terms),
        total_mean=total_mean,
        total_se=total_se,
        benchmark_mean=bench_mean,
        benchmark_se=bench_se,
        expected_total=expected_total,
        total_within_band=abs(total_mean - expected_total) <= 3.0 * gap_se,
        crosses_within_band=all(ct.within_band for ct in cross_terms),
    )
