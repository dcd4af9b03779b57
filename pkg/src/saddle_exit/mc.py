"""Monte Carlo experiments against the limiting exit law."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynsys import SpectralData, VectorFieldModel
from .errors import InvalidN, TooFewSamples
from .noise import STREAM_SDE
from .sde import (
    BLOCK,
    ExitSample,
    classify_side,
    coupled_batch,
    default_step,
    default_t_cap,
    em_paths,
    exit_batch,
)
from .theory import LimitLaw, default_t_read

__all__ = [
    "ComparisonReport",
    "ExitSample",
    "compare_to_limit",
    "convergence_sweep",
    "gronwall_check",
    "ks_distance",
    "lemma_tests",
    "run_batch",
]

KS_99 = 1.63


def ks_distance(x, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic ``sup |F_n - F|``."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0:
        return math.nan
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def run_batch(model: VectorFieldModel, s: SpectralData, law: LimitLaw | None, x0, eps: float,
              n: int, seed: int, h: float | None = None, threads: int = 1,
              t_cap: float | None = None) -> list[ExitSample]:
    """``n`` independent exit samples with noise streams ``(seed, 0..n-1)``.

    Trajectories are cut into fixed blocks; blocks run on ``threads`` workers
    and are reassembled in index order, so output does not depend on the
    thread count. Per-path failures come back flagged, not raised.
    """
    if n < 1:
        raise InvalidN(f"n must be at least 1, got {n}")
    h = default_step(s.lam) if h is None else h
    t_cap = default_t_cap(eps, s.lam) if t_cap is None else t_cap
    indices = np.arange(n)
    blocks = [indices[k:k + BLOCK] for k in range(0, n, BLOCK)]
    run = lambda idx: exit_batch(model, x0, eps, h, seed, idx, t_cap, stream=STREAM_SDE)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    tau = np.concatenate([p.tau for p in parts])
    pts = np.concatenate([p.exit_point for p in parts])
    capped = np.concatenate([p.capped for p in parts])
    bad = np.concatenate([p.nonfinite for p in parts])
    if law is not None:
        q_p, q_m = law.params.q_plus, law.params.q_minus
        side = classify_side(pts, s, q_p, q_m, model.domain.diameter / 4)
    else:
        side = classify_side(pts, s)
    side = np.where(capped | bad, 0, side)
    return [ExitSample(int(i), eps, float(t), p, int(sd), bool(c), seed, bool(b))
            for i, t, p, sd, c, b in zip(indices, tau, pts, side, capped, bad)]


def samples_to_csv(samples: list[ExitSample], offset=None) -> str:
    """CSV with header ``traj,eps,tau,exit_x0..,side,capped``, rows by trajectory.

    ``offset`` is added to exit points (to report them in unshifted coordinates).
    """
    d = len(samples[0].exit_point) if samples else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["traj", "eps", "tau"] + [f"exit_x{j}" for j in range(d)] + ["side", "capped"])
    for smp in sorted(samples, key=lambda r: r.trajectory_index):
        w.writerow([smp.trajectory_index, repr(smp.eps), repr(smp.tau)]
                   + [repr(float(v)) for v in _shift(smp.exit_point, offset)]
                   + [smp.side, int(smp.capped)])
    return buf.getvalue()


def _shift(p, offset):
    return p if offset is None else np.asarray(p) + offset


def samples_from_csv(text: str, seed: int = 0, offset=None) -> list[ExitSample]:
    """Inverse of :func:`samples_to_csv`; ``offset`` is subtracted from exit points."""
    rows = list(csv.reader(io.StringIO(text)))
    header, rows = rows[0], rows[1:]
    d = sum(1 for c in header if c.startswith("exit_x"))
    out = []
    for r in rows:
        tau = float(r[2])
        pt = np.array([float(v) for v in r[3:3 + d]])
        capped = bool(int(r[4 + d]))
        # the nonfinite flag is not stored; it is recovered from the values
        bad = not capped and not (math.isfinite(tau) and np.all(np.isfinite(pt)))
        out.append(ExitSample(int(r[0]), float(r[1]), tau,
                              _shift(pt, None if offset is None else -np.asarray(offset)),
                              int(r[3 + d]), capped, seed, bad))
    return out


@dataclass
class ComparisonReport:
    n: int
    n_capped: int
    n_ambiguous: int
    n_nonfinite: int
    n_used: int
    side_fraction_plus: float
    side_fraction_minus: float
    ambiguous_fraction: float
    ks_plus: float
    ks_minus: float
    ks_band_plus: float
    ks_band_minus: float
    quantiles: dict = field(default_factory=dict)
    theory_quantiles: dict = field(default_factory=dict)
    concentration: dict = field(default_factory=dict)
    mean_exit_distance: float = math.nan

    def to_dict(self):
        return asdict(self)


QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)


def compare_to_limit(samples: list[ExitSample], law: LimitLaw, lam: float | None = None,
                     radii=None, diameter: float | None = None,
                     min_per_side: int = 100) -> ComparisonReport:
    """KS distances of centered exit times per side, plus exit-point concentration.

    Times are centered as ``tau - ln(1/eps)/lam``. Concentration fractions
    are the share of uncapped, classified samples within each radius of the
    nearest of q±; default radii are 0.2, 0.1, 0.05 times the domain
    diameter.
    """
    lam = law.params.lam if lam is None else lam
    n = len(samples)
    capped = np.array([smp.capped for smp in samples], dtype=bool)
    bad = np.array([smp.nonfinite for smp in samples], dtype=bool)
    side = np.array([smp.side for smp in samples], dtype=int)
    ambiguous = (side == 0) & ~capped & ~bad
    used = ~capped & ~bad & ~ambiguous
    t_hat = np.array([smp.tau - math.log(1.0 / smp.eps) / lam for smp in samples])
    pts = np.array([smp.exit_point for smp in samples])
    plus = used & (side > 0)
    minus = used & (side < 0)
    if plus.sum() < min_per_side or minus.sum() < min_per_side:
        raise TooFewSamples(f"need {min_per_side} uncapped samples per side, "
                            f"got {plus.sum()} / {minus.sum()}")
    ks_p = ks_distance(t_hat[plus], lambda t: law.cdf(1, t))
    ks_m = ks_distance(t_hat[minus], lambda t: law.cdf(-1, t))

    q = np.where(side[:, None] > 0, law.params.q_plus, law.params.q_minus)
    dist = np.linalg.norm(pts - q, axis=1)
    if radii is None:
        diameter = 2.0 * max(np.linalg.norm(law.params.q_plus), np.linalg.norm(law.params.q_minus)) \
            if diameter is None else diameter
        radii = [0.2 * diameter, 0.1 * diameter, 0.05 * diameter]
    # unclassified exits count as far away
    dist_all = np.where(used, dist, np.inf)[~capped & ~bad]
    conc = {float(r): float(np.mean(dist_all <= r)) for r in radii}

    quant = {str(p): float(np.quantile(t_hat[used], p)) for p in QUANTILE_LEVELS}
    quant["mean"] = float(np.mean(t_hat[used]))
    theory = {str(p): float(_mixture_ppf(law, p)) for p in QUANTILE_LEVELS}
    return ComparisonReport(
        n=n, n_capped=int(capped.sum()), n_ambiguous=int(ambiguous.sum()),
        n_nonfinite=int(bad.sum()), n_used=int(used.sum()),
        side_fraction_plus=float(np.mean(side > 0)),
        side_fraction_minus=float(np.mean(side < 0)),
        ambiguous_fraction=float(np.mean(side == 0)),
        ks_plus=ks_p, ks_minus=ks_m,
        ks_band_plus=KS_99 / math.sqrt(plus.sum()), ks_band_minus=KS_99 / math.sqrt(minus.sum()),
        quantiles=quant, theory_quantiles=theory, concentration=conc,
        mean_exit_distance=float(np.mean(dist[used])),
    )


def _mixture_ppf(law, p):
    from scipy.optimize import brentq
    lam = law.params.lam
    lo = min(law.params.h_plus, law.params.h_minus) - 60.0 / lam
    hi = max(law.params.h_plus, law.params.h_minus) + 60.0 / lam
    return brentq(lambda t: law.mixture_cdf(t) - p, lo, hi, xtol=1e-13)


SWEEP_COLUMNS = ("eps", "n", "n_capped", "ks_plus", "ks_minus", "side_frac", "conc_r01",
                 "median_err")


def convergence_sweep(model: VectorFieldModel, s: SpectralData, law: LimitLaw, x0, eps_list,
                      n: int, seed: int, h: float | None = None, threads: int = 1,
                      conc_radius: float = 0.1):
    """Per-eps comparison reports and a tidy table for plotting.

    ``median_err`` is the empirical median of the centered exit time minus
    the median of the limiting mixture; ``conc_r01`` the fraction of exits
    within ``conc_radius`` of q±.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must hold at least 3 strictly decreasing values")
    rows, reports = [], []
    med_theory = _mixture_ppf(law, 0.5)
    for eps in eps_list:
        smp = run_batch(model, s, law, x0, eps, n, seed, h, threads)
        rep = compare_to_limit(smp, law, radii=[conc_radius], diameter=model.domain.diameter,
                               min_per_side=min(100, n // 4))
        reports.append(rep)
        rows.append({
            "eps": eps, "n": n, "n_capped": rep.n_capped,
            "ks_plus": rep.ks_plus, "ks_minus": rep.ks_minus,
            "side_frac": rep.side_fraction_plus,
            "conc_r01": rep.concentration[float(conc_radius)],
            "median_err": rep.quantiles["0.5"] - med_theory,
        })
    return rows, reports


def sweep_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------- lemma-level checks

@dataclass
class LemmaReport:
    deltas: list
    eps_pair: tuple
    phase_mean_gap: dict
    phase_pass: bool
    transverse_median: dict
    transverse_beta: float
    transverse_pass: bool
    linearization_p90: dict
    linearization_constant: float
    linearization_ratios: list
    linearization_pass: bool
    n_no_crossing: int

    @property
    def passed(self):
        return self.phase_pass and self.transverse_pass and self.linearization_pass

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def lemma_tests(model: VectorFieldModel, s: SpectralData, x0, eps: float, delta: float, n: int,
                seed: int, eps_coarse: float = 1e-2, h: float | None = None,
                eps_linearization: float | None = None) -> LemmaReport:
    """Coupled-path checks of the linear-phase and linearization-error statements.

    * drift of ``tau(X~, delta/4) - ln(delta / (eps |N|)) / lam`` shrinks from
      ``eps_coarse`` to ``eps`` (mean over paths, N read at a late time);
    * median of ``|eps Pi_L Y(tau)|`` scales like ``eps^beta`` with ``beta > 0``;
    * 90th percentile of ``|X_eps(tau) - X~_eps(tau)|`` is at most
      ``C delta^2`` with C fitted at ``delta`` and checked (factor 2) at
      ``delta/2, delta/4``; the halving ratios lie in [1/8, 1/2].

    The first two use the scaled scheme for Y; the third runs X and Y with
    identical Euler-Maruyama steps so only the nonlinearity separates them.
    """
    if n < 1:
        raise InvalidN(f"n must be at least 1, got {n}")
    h = default_step(s.lam) if h is None else h
    deltas = np.array([delta, delta / 2, delta / 4])
    t_read = default_t_read(s)
    idx = np.arange(n)

    gaps, medians, missing = {}, {}, 0
    d_phase = deltas[-1]
    for e in (eps_coarse, eps):
        t_end = max(t_read, math.log(delta / e) / s.lam + t_read)
        res = coupled_batch(model, s, x0, e, h, seed, idx, [d_phase], t_end, t_end, scaled=True)
        ok = np.isfinite(res.tau[0]) & np.isfinite(res.N_hat) & (res.N_hat != 0)
        missing += int((~ok).sum())
        gap = res.tau[0, ok] - np.log(d_phase / (e * np.abs(res.N_hat[ok]))) / s.lam
        gaps[e] = float(np.mean(gap))
        medians[e] = float(np.median(np.linalg.norm(res.YL_at[0, ok], axis=1)))
    phase_ok = abs(gaps[eps]) < abs(gaps[eps_coarse])
    beta = math.log(medians[eps_coarse] / medians[eps]) / math.log(eps_coarse / eps)
    transverse_ok = beta > 0

    e_lin = eps if eps_linearization is None else eps_linearization
    t_end = math.log(delta / e_lin) / s.lam + 10.0 / s.lam
    res = coupled_batch(model, s, x0, e_lin, h, seed, idx, deltas, t_end, None, scaled=False)
    p90 = {}
    for k, dl in enumerate(deltas):
        ok = np.isfinite(res.tau[k])
        missing += int((~ok).sum())
        p90[float(dl)] = float(np.quantile(np.linalg.norm(res.X_at[k, ok] - res.Xt_at[k, ok], axis=1), 0.9))
    vals = [p90[float(dl)] for dl in deltas]
    C = vals[0] / deltas[0] ** 2
    ratios = [vals[k + 1] / vals[k] if vals[k] > 0 else math.nan for k in range(2)]
    within = all(vals[k] <= 2.0 * C * deltas[k] ** 2 for k in range(1, 3))
    linearization_ok = within and all(0.125 <= r <= 0.5 for r in ratios)
    return LemmaReport([float(x) for x in deltas], (eps_coarse, eps), gaps, bool(phase_ok), medians,
                       float(beta), bool(transverse_ok), p90, float(C), ratios, bool(linearization_ok), missing)


@dataclass
class GronwallReport:
    n: int
    lipschitz: float
    worst_ratio: float
    passed: bool


def gronwall_check(model: VectorFieldModel, y, eps: float, h: float, seed: int, n: int = 100,
                   t_max: float = 5.0, slack: float = 0.1) -> GronwallReport:
    """``|S^t_{eps,W} y - S^t y| <= (1 + slack) eps W*(t) exp(M t)`` up to ``t_max``.

    Both paths use the same Euler grid (the deterministic one with W = 0);
    M is the largest Jacobian norm over G. Each path is checked up to the
    first time either trajectory leaves G.
    """
    M = model.lipschitz_constant()
    times, X, W = em_paths(model, y, eps, h, seed, np.arange(n), t_max)
    _, S, _ = em_paths(model, y, 0.0, h, seed, [0], t_max)
    S = S[0]
    inside_S = model.domain.g(S) < 0
    worst = 0.0
    for i in range(n):
        inside = (model.domain.g(X[i]) < 0) & inside_S
        stop = np.argmin(inside) if not inside.all() else len(times)
        dev = np.linalg.norm(X[i, :stop] - S[:stop], axis=1)
        w_star = np.maximum.accumulate(np.linalg.norm(W[i, :stop], axis=1))
        bound = eps * w_star * np.exp(M * times[:stop])
        pos = bound > 0
        if pos.any():
            worst = max(worst, float(np.max(dev[pos] / bound[pos])))
    return GronwallReport(n, M, worst, worst <= 1.0 + slack)
