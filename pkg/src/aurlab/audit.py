"""Monte Carlo checks of the closed-form constants.

Two kinds of evidence are produced:

* :func:`verify_equivalence` compares the sampled average of the perturbed
  squared loss ``||y - (X + D) b||^2`` with the ridge objective
  ``||y - X b||^2 + lam ||b||^2`` at a few probe coefficient vectors.
* :func:`audit_moments` estimates per-entry mean, second moment, a cross
  moment and the volume of a set, and checks both the published and the
  derived closed forms against them with a 3-standard-error gate.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, FormulaInvalidError, RankDeficientError, SamplingError
from .geometry import PenaltyMode, UncertaintySet, per_entry_second_moment, ridge_lambda, volume
from .regression import RegressionProblem, fit_aur, fit_ols
from .sampling import (
    MAX_REJECTION_DIM,
    PerturbationBatch,
    SamplerConfig,
    SamplingMethod,
    hit_and_run,
    rejection_sample,
)
from .stats import RunningStats, batch_means_se

SIGMA_GATE = 3.0
RELATIVE_FLOOR = 0.01
MIN_EQUIVALENCE_SAMPLES = 10_000
N_BATCHES = 50
_CHUNK = 1 << 16


class Verdict(str, enum.Enum):
    AGREE = "agree"
    PAPER_DISAGREES = "paper_disagrees"
    DERIVED_DISAGREES = "derived_disagrees"
    INCONCLUSIVE = "inconclusive"


def mc_average_loss(problem: RegressionProblem, beta, uset: UncertaintySet, batch: PerturbationBatch,
                    n_batches: int | None = None):
    """Mean of ``||y - (X + D) beta||^2`` over the batch and its standard error.

    The loss is accumulated chunk by chunk without keeping per-sample values.
    With ``n_batches`` the standard error comes from that many contiguous
    batch means (for correlated chain output); otherwise it is the iid one.
    """
    beta = np.asarray(beta, dtype=float)
    if len(batch) == 0:
        raise ConfigError("empty perturbation batch")
    if batch.uset != uset:
        raise ConfigError("batch was drawn from a different set")
    if (uset.n, uset.k) != (problem.n, problem.k) or beta.shape != (problem.k,):
        raise DimensionError(
            f"problem is {problem.n}x{problem.k}, set is {uset.n}x{uset.k}, beta has shape {beta.shape}"
        )
    r0 = problem.y - problem.X @ beta
    stats = RunningStats()
    total = len(batch)
    if n_batches:
        n_batches = min(n_batches, total)
        size = total // n_batches
        block_sums = np.zeros(n_batches)
    for lo in range(0, total, _CHUNK):
        chunk = batch.samples[lo: lo + _CHUNK]
        res = r0[None, :] - chunk @ beta
        loss = np.einsum("ij,ij->i", res, res)
        stats.push(loss)
        if n_batches:
            ids = np.arange(lo, lo + len(loss)) // size
            keep = ids < n_batches
            block_sums += np.bincount(ids[keep], weights=loss[keep], minlength=n_batches)
    if n_batches and n_batches >= 2:
        means = block_sums / size
        se = float(np.std(means, ddof=1) / math.sqrt(n_batches))
    else:
        se = stats.std_error if total > 1 else 0.0
    return stats.mean, se


@dataclass(frozen=True)
class EquivalenceReport:
    uset: UncertaintySet
    probe: str
    beta_probe: np.ndarray
    mc_mean_loss: float
    mc_std_error: float
    closed_form_loss: float
    relative_gap: float
    mode: PenaltyMode
    lambda_value: float
    sample_count: int
    verdict: Verdict

    def to_dict(self) -> dict:
        return {
            "set": self.uset.to_dict(),
            "probe": self.probe,
            "beta_probe": [float(b) for b in self.beta_probe],
            "mc_mean_loss": self.mc_mean_loss,
            "mc_std_error": self.mc_std_error,
            "closed_form_loss": self.closed_form_loss,
            "relative_gap": self.relative_gap,
            "mode": self.mode.value,
            "lambda": self.lambda_value,
            "sample_count": self.sample_count,
            "verdict": self.verdict.value,
        }


def probe_vectors(problem: RegressionProblem, uset: UncertaintySet, mode: PenaltyMode, seed: int) -> dict:
    """OLS fit, ridge fit at the mode's penalty, and a seeded Gaussian vector."""
    try:
        ols = fit_ols(problem).beta
    except RankDeficientError:
        ols = np.linalg.lstsq(problem.X, problem.y, rcond=None)[0]
    aur = fit_aur(problem, ridge_lambda(uset, mode)).beta
    rand = np.random.default_rng([seed, 1]).standard_normal(problem.k)
    return {"ols": ols, "aur": aur, "random": rand}


def verify_equivalence(problem: RegressionProblem, uset: UncertaintySet,
                       mode: PenaltyMode | str = PenaltyMode.DERIVED,
                       sample_count: int = 200_000, seed: int = 0,
                       config: SamplerConfig | None = None,
                       batch: PerturbationBatch | None = None) -> list:
    """Sampled averaged loss versus the ridge objective, at three probes.

    A probe agrees when the relative gap is at most
    ``max(1%, 3 * se / |closed form|)``.  One hit-and-run batch is shared by
    all probes; pass ``batch`` to reuse draws across modes.
    """
    mode = PenaltyMode(mode)
    if sample_count < MIN_EQUIVALENCE_SAMPLES:
        raise ConfigError(f"sample_count must be at least {MIN_EQUIVALENCE_SAMPLES}")
    if (uset.n, uset.k) != (problem.n, problem.k):
        raise DimensionError(f"set shape {(uset.n, uset.k)} does not match problem {(problem.n, problem.k)}")
    lam = ridge_lambda(uset, mode)
    if batch is None:
        config = config or SamplerConfig(seed=seed)
        batch = hit_and_run(uset, config, sample_count)
    reports = []
    for name, beta in probe_vectors(problem, uset, mode, seed).items():
        mean, se = mc_average_loss(problem, beta, uset, batch, n_batches=N_BATCHES)
        r = problem.y - problem.X @ beta
        closed = float(r @ r + lam * (beta @ beta))
        gap = abs(mean - closed) / max(1e-12, abs(closed))
        gate = max(RELATIVE_FLOOR, SIGMA_GATE * se / max(1e-12, abs(closed)))
        if gap <= gate:
            verdict = Verdict.AGREE
        elif mode is PenaltyMode.PAPER:
            verdict = Verdict.PAPER_DISAGREES
        else:
            verdict = Verdict.DERIVED_DISAGREES
        reports.append(EquivalenceReport(uset, name, beta, mean, se, closed, gap, mode, lam, len(batch), verdict))
    return reports


# ---------------------------------------------------------------------------
# moment ledger


@dataclass(frozen=True)
class AuditRow:
    quantity: str
    paper_value: float | None
    derived_value: float | None
    mc_value: float | None
    mc_std_error: float | None
    verdict: Verdict
    paper_agrees: bool | None = None
    derived_agrees: bool | None = None


@dataclass
class FormulaAuditLedger:
    uset: UncertaintySet
    method: SamplingMethod
    sample_count: int
    seed: int
    rows: list = field(default_factory=list)

    @property
    def derived_failures(self) -> list:
        return [row for row in self.rows if row.verdict is Verdict.DERIVED_DISAGREES]

    def row(self, quantity: str) -> AuditRow:
        for row in self.rows:
            if row.quantity == quantity:
                return row
        raise KeyError(quantity)

    def to_dict(self) -> dict:
        return {
            "set": self.uset.to_dict(),
            "method": self.method.value,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "rows": [{**asdict(r), "verdict": r.verdict.value} for r in self.rows],
        }

    def to_table(self) -> str:
        def fmt(v):
            if v is None:
                return "-"
            if isinstance(v, bool):
                return "yes" if v else "no"
            return f"{v:.6g}"

        head = ("quantity", "paper", "derived", "mc", "mc_se", "verdict")
        lines = [head]
        for r in self.rows:
            lines.append((r.quantity, fmt(r.paper_value), fmt(r.derived_value), fmt(r.mc_value),
                          fmt(r.mc_std_error), r.verdict.value))
        widths = [max(len(line[i]) for line in lines) for i in range(len(head))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in lines)


def _judge(quantity, paper, derived, mc, se) -> AuditRow:
    if mc is None or derived is None or not math.isfinite(se):
        return AuditRow(quantity, paper, derived, mc, se, Verdict.INCONCLUSIVE)
    tol = SIGMA_GATE * se

    def agrees(value):
        return abs(value - mc) <= tol + 1e-12 * abs(value)

    d_ok = agrees(derived)
    p_ok = agrees(paper) if paper is not None else None
    if not d_ok:
        verdict = Verdict.DERIVED_DISAGREES
    elif p_ok is False:
        verdict = Verdict.PAPER_DISAGREES
    else:
        verdict = Verdict.AGREE
    return AuditRow(quantity, paper, derived, mc, se, verdict, p_ok, d_ok)


def _closed(fn, *args):
    try:
        return fn(*args)
    except FormulaInvalidError:
        return None


def sample_moment_statistics(flat: np.ndarray) -> dict:
    """Per-sample statistics whose means are the per-entry mean, second and cross moments."""
    d = flat.shape[1]
    stats = {"mean": flat.mean(axis=1), "m2": np.einsum("ij,ij->i", flat, flat) / d}
    if d >= 2:
        s = flat.sum(axis=1)
        stats["cross"] = (s * s - stats["m2"] * d) / (d * (d - 1))
    return stats


def audit_moments(uset: UncertaintySet, sample_count: int = 100_000, seed: int = 0,
                  method: SamplingMethod | str = SamplingMethod.HIT_AND_RUN,
                  config: SamplerConfig | None = None,
                  volume_samples: int | None = None) -> FormulaAuditLedger:
    """Ledger of closed-form versus Monte Carlo moments for one set.

    Moment rows come from ``method`` draws (hit-and-run or exact rejection).
    The volume row uses the acceptance rate of bounding-box rejection and is
    inconclusive above ``d = 12`` or when rejection runs out of proposals.
    """
    method = SamplingMethod(method)
    if method is SamplingMethod.HIT_AND_RUN:
        batch = hit_and_run(uset, config or SamplerConfig(seed=seed), sample_count)
    elif method is SamplingMethod.REJECTION:
        batch = rejection_sample(uset, seed, sample_count)
    else:
        raise ConfigError("audit supports the 'har' and 'rej' samplers")
    flat = batch.flat
    per_sample = sample_moment_statistics(flat)

    def estimate(values):
        if method is SamplingMethod.REJECTION:
            return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))
        return float(values.mean()), batch_means_se(values, N_BATCHES)

    ledger = FormulaAuditLedger(uset, method, sample_count, seed)
    mean_mc, mean_se = estimate(per_sample["mean"])
    ledger.rows.append(_judge("mean", 0.0, 0.0, mean_mc, mean_se))
    m2_mc, m2_se = estimate(per_sample["m2"])
    ledger.rows.append(_judge(
        "m2",
        _closed(per_entry_second_moment, uset, PenaltyMode.PAPER),
        _closed(per_entry_second_moment, uset, PenaltyMode.DERIVED),
        m2_mc, m2_se,
    ))
    if "cross" in per_sample:
        cross_mc, cross_se = estimate(per_sample["cross"])
        ledger.rows.append(_judge("cross", 0.0, 0.0, cross_mc, cross_se))
    else:
        ledger.rows.append(AuditRow("cross", 0.0, 0.0, None, None, Verdict.INCONCLUSIVE))
    ledger.rows.append(_judge(
        "lambda",
        _closed(ridge_lambda, uset, PenaltyMode.PAPER),
        _closed(ridge_lambda, uset, PenaltyMode.DERIVED),
        uset.n * m2_mc, uset.n * m2_se,
    ))
    vol = _closed(volume, uset)
    if uset.d > MAX_REJECTION_DIM:
        ledger.rows.append(AuditRow("volume", vol, vol, None, None, Verdict.INCONCLUSIVE))
    else:
        if method is SamplingMethod.REJECTION and volume_samples is None:
            vbatch = batch
        else:
            try:
                vbatch = rejection_sample(uset, seed + 1, volume_samples or sample_count)
            except SamplingError:
                vbatch = None
        if vbatch is None:
            ledger.rows.append(AuditRow("volume", vol, vol, None, None, Verdict.INCONCLUSIVE))
        else:
            vol_mc, vol_se = rejection_volume(vbatch)
            ledger.rows.append(_judge("volume", vol, vol, vol_mc, vol_se))
    return ledger


def rejection_volume(batch: PerturbationBatch):
    """Bounding-box volume times acceptance rate, with its binomial standard error."""
    if batch.method is not SamplingMethod.REJECTION:
        raise ConfigError("volume estimates need a rejection batch")
    box = (2.0 * batch.uset.rho) ** batch.uset.d
    p = batch.acceptance_rate
    se = math.sqrt(max(p * (1.0 - p), 0.0) / batch.proposals)
    return box * p, box * se
