"""Power sweeps, type-I audits and asymptotic-vs-permutation diagnostics.

Results are written as tidy CSV with a fixed header so runs can be resumed
and re-plotted. Every random draw is keyed by ``stream_id`` of the method,
run, training size and test size, so a resumed sweep reproduces the rows it
has not written yet.
"""

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .datasets import make_sampler, shuffle_to_null
from .errors import ConfigError, DomainError, IndepTestError
from .estimators import hsic_variance
from .kernels import GramPair
from .methods import Critic, HsicStatistic, critic_pairs, get_method
from .numkit import make_rng, normal_cdf, normal_quantile, stream_id
from .testing import TrainConfig, permutation_test, train

logger = logging.getLogger(__name__)

__all__ = [
    "CSV_HEADER",
    "PowerCurve",
    "AsymptoticCurve",
    "SweepConfig",
    "empirical_power",
    "asymptotic_power_nds",
    "asymptotic_power_hsic",
    "asymptotic_curve",
    "simulated_threshold_power",
    "power_sweep",
    "read_sweep_csv",
    "curves_from_rows",
    "typeI_audit",
    "perm_vs_asymptotics_report",
]

CSV_HEADER = (
    "method",
    "dataset",
    "n_train",
    "m",
    "run",
    "power",
    "stderr",
    "n_tests",
    "n_perm",
    "alpha",
    "train_seed",
    "status",
)


@dataclass
class PowerCurve:
    method: str
    test_sizes: list
    power: list
    stderr: list
    n_train_runs: int
    n_tests_per_run: int
    n_train: int = None


@dataclass
class AsymptoticCurve:
    test_sizes: list
    power: list
    n_est: int
    formula: str
    params: dict = field(default_factory=dict)


def asymptotic_power_nds(T1, T0, tau1, tau0, m, alpha):
    """``Phi(sqrt(m) (T1 - T0) / tau1 + (tau0 / tau1) Phi^{-1}(alpha))``."""
    if not tau1 > 0:
        raise DomainError(f"tau1 must be positive, got {tau1}")
    if not tau0 > 0:
        raise DomainError(f"tau0 must be positive, got {tau0}")
    arg = math.sqrt(m) * (T1 - T0) / tau1 + (tau0 / tau1) * float(normal_quantile(alpha))
    return float(normal_cdf(arg))


def asymptotic_power_hsic(hsic, sigma1, psi_quantile, m):
    """``Phi(sqrt(m) hsic / sigma1 - psi_quantile / (sqrt(m) sigma1))``."""
    if not sigma1 > 0:
        raise DomainError(f"sigma1 must be positive, got {sigma1}")
    rm = math.sqrt(m)
    return float(normal_cdf(rm * hsic / sigma1 - psi_quantile / (rm * sigma1)))


def empirical_power(statistic, sampler, m, n_tests, rng, n_perm=200, alpha=0.05, null=False):
    """Rejection rate of the permutation test over ``n_tests`` fresh size-``m`` samples.

    Returns ``(power, binomial_stderr)``. With ``null`` each sample is
    shuffled first, so the rate estimates the type-I error.
    """
    if n_tests < 1:
        raise ConfigError("n_tests must be >= 1")
    rejects = 0
    for _ in range(n_tests):
        sample = sampler(m, rng)
        if null:
            sample = shuffle_to_null(sample, rng)
        rejects += permutation_test(statistic, sample, n_perm=n_perm, alpha=alpha, rng=rng).reject
    power = rejects / n_tests
    return power, math.sqrt(power * (1.0 - power) / n_tests)


def _critic_moments(params, sampler, n_est, rng, n_shuffles=4):
    s = sampler(n_est, rng)
    paired = np.asarray(critic_pairs(params, s.x, s.y))
    crossed = np.concatenate(
        [np.asarray(critic_pairs(params, s.x, s.y[rng.permutation(n_est)])) for _ in range(n_shuffles)]
    )
    return {
        "T1": float(paired.mean()),
        "T0": float(crossed.mean()),
        "tau1": float(paired.std()),
        "tau0": float(crossed.std()),
    }


def _hsic_moments(statistic, sampler, n_est, m_psi, rng, alpha, n_psi=2000, lam=1e-8):
    s = sampler(n_est, rng)
    K, L = statistic.grams(s.x, s.y)
    var = hsic_variance(GramPair(K, L), lam=lam)
    # null quantile of m * HSIC_u from permutations of one size-m_psi sample
    t = sampler(m_psi, rng)
    at = statistic.prepare(t.x, t.y)
    draws = np.array([m_psi * at(rng.permutation(m_psi)) for _ in range(n_psi)])
    return {
        "hsic": float(var.hsic_u),
        "sigma1": float(math.sqrt(var.sigma2)),
        "psi_quantile": float(np.quantile(draws, 1.0 - alpha)),
    }


def asymptotic_curve(method, params, sampler, m_grid, rng, n_est=2000, alpha=0.05, n_psi=2000):
    """Asymptotic power at each test size from moments estimated on ``n_est`` fresh points.

    Critic families use the NDS formula. HSIC families use the HSIC formula
    with the null quantile taken from ``n_psi`` permutations at the largest
    test size.
    """
    m_grid = [int(m) for m in m_grid]
    if isinstance(method, Critic):
        mom = _critic_moments(params, sampler, n_est, rng)
        power = [asymptotic_power_nds(mom["T1"], mom["T0"], mom["tau1"], mom["tau0"], m, alpha) for m in m_grid]
        return AsymptoticCurve(m_grid, power, n_est, "nds", mom)
    statistic = method.statistic(params, rng=rng)
    if not isinstance(statistic, HsicStatistic):
        raise ConfigError(f"no asymptotic power formula for {method.name}")
    mom = _hsic_moments(statistic, sampler, n_est, max(m_grid), rng, alpha, n_psi=n_psi)
    power = [asymptotic_power_hsic(mom["hsic"], mom["sigma1"], mom["psi_quantile"], m) for m in m_grid]
    return AsymptoticCurve(m_grid, power, n_est, "hsic", mom)


def simulated_threshold_power(statistic, sampler, m, rng, n_null=200, n_alt=200, alpha=0.05):
    """Power against a fixed threshold: the ``1 - alpha`` quantile of the statistic on fresh null samples."""
    null_vals = np.array([statistic(*_xy(shuffle_to_null(sampler(m, rng), rng))) for _ in range(n_null)])
    thr = float(np.quantile(null_vals, 1.0 - alpha))
    alt_vals = np.array([statistic(*_xy(sampler(m, rng))) for _ in range(n_alt)])
    return float(np.mean(alt_vals > thr)), thr


def _xy(sample):
    return sample.x, sample.y


def typeI_audit(statistic, sampler, m, n_datasets, rng, n_perm=500, alpha=0.05):
    """Rejection rate over ``n_datasets`` shuffled (null) samples, with a 3-sigma binomial band."""
    rate, se = empirical_power(statistic, sampler, m, n_datasets, rng, n_perm=n_perm, alpha=alpha, null=True)
    band = 3.0 * math.sqrt(alpha * (1.0 - alpha) / n_datasets)
    return {
        "rate": rate,
        "stderr": se,
        "n_datasets": n_datasets,
        "rejections": int(round(rate * n_datasets)),
        "alpha": alpha,
        "upper_band": alpha + band,
        "within_band": rate <= alpha + band,
    }


def perm_vs_asymptotics_report(
    method, params, sampler, m_grid, rng, n_tests=200, n_perm=200, alpha=0.05, n_est=2000, n_sim=200
):
    """Asymptotic, simulated-threshold and permutation power per test size.

    Each row also carries the correlation between the statistic and its
    permutation threshold (``1 - alpha`` quantile of the shuffled values) over
    the ``n_tests`` permutation tests; it is ``None`` when either is constant.
    """
    m_grid = [int(m) for m in m_grid]
    try:
        curve = asymptotic_curve(method, params, sampler, m_grid, rng, n_est=n_est, alpha=alpha)
        asymptotic, formula, moments = curve.power, curve.formula, curve.params
    except DomainError as exc:
        # degenerate statistic (zero spread): no asymptotic prediction
        logger.warning("asymptotic power unavailable: %s", exc)
        asymptotic, formula, moments = [None] * len(m_grid), None, {}
    statistic = method.statistic(params, rng=rng)
    rows = []
    for m, asym in zip(m_grid, asymptotic):
        sim, thr = simulated_threshold_power(statistic, sampler, m, rng, n_null=n_sim, n_alt=n_sim, alpha=alpha)
        stats, thrs, rejects = [], [], 0
        for _ in range(n_tests):
            res = permutation_test(statistic, sampler(m, rng), n_perm=n_perm, alpha=alpha, rng=rng)
            rejects += res.reject
            stats.append(res.statistic)
            thrs.append(float(np.quantile(res.perm_values[1:], 1.0 - alpha)))
        stats, thrs = np.array(stats), np.array(thrs)
        corr = None
        if stats.std() > 0 and thrs.std() > 0:
            corr = float(np.corrcoef(stats, thrs)[0, 1])
        rows.append(
            {
                "m": m,
                "asymptotic": asym,
                "simulated": sim,
                "permutation": rejects / n_tests,
                "sim_threshold": thr,
                "stat_threshold_corr": corr,
            }
        )
    return {"formula": formula, "moments": moments, "rows": rows}


# -- sweeps -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    methods: tuple = ("hsic-m",)
    dataset: str = "hdgm"
    dataset_param: int = 10
    m_grid: tuple = (128, 256, 512)
    n_train_grid: tuple = (2000,)
    n_runs: int = 3
    n_tests: int = 50
    n_perm: int = 200
    alpha: float = 0.05
    val_frac: float = 0.0
    seed: int = 0
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if not self.methods or not self.m_grid or not self.n_train_grid:
            raise ConfigError("sweep needs at least one method, test size and training size")
        if self.n_runs < 1 or self.n_tests < 1:
            raise ConfigError("n_runs and n_tests must be >= 1")
        if not 0.0 <= self.val_frac < 1.0:
            raise ConfigError("val_frac must lie in [0, 1)")

    def to_dict(self):
        return dataclasses.asdict(self)


def _row_key(row):
    return (row["method"], int(row["n_train"]), int(row["m"]), int(row["run"]))


def read_sweep_csv(path):
    """Rows of a sweep CSV with numeric fields parsed back to numbers."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConfigError(f"{path} does not carry the sweep header")
        for r in reader:
            for k in ("n_train", "m", "run", "n_tests", "n_perm", "train_seed"):
                r[k] = int(r[k])
            for k in ("power", "stderr", "alpha"):
                r[k] = float(r[k])
            rows.append(r)
    return rows


def _train_seed(cfg, method, n_train, run):
    return int(make_rng(cfg.seed, stream_id("train-seed", method, n_train, run)).integers(2**62))


def _train_one(cfg, method, n_train, run, sampler):
    seed = _train_seed(cfg, method.name, n_train, run)
    rng = make_rng(seed)
    data = sampler(n_train, rng)
    if not method.trainable:
        return seed, method.statistic({}, rng=rng)
    n_val = int(round(cfg.val_frac * n_train))
    tr, va = data.subset(np.arange(n_train - n_val)), None
    if n_val >= 5:
        va = data.subset(np.arange(n_train - n_val, n_train))
    outcome = train(method, tr, cfg.train, rng, val_set=va)
    return seed, method.statistic(outcome.params, rng=rng)


def power_sweep(cfg, csv_path, manifest_path=None, resume=True):
    """Train ``n_runs`` models per (method, training size) and record power at every test size.

    Writes one CSV row per (method, n_train, m, run) as soon as it is known.
    Failures are recorded with ``status`` set to the error and the sweep moves
    on. With ``resume``, rows already present in ``csv_path`` are kept and
    skipped. Returns ``{(method, n_train): PowerCurve}`` over all rows.
    """
    sampler = make_sampler(cfg.dataset, cfg.dataset_param)
    methods = [get_method(name) for name in cfg.methods]
    done = {}
    if resume and os.path.exists(csv_path):
        for r in read_sweep_csv(csv_path):
            done[_row_key(r)] = r
    if manifest_path is not None:
        if resume and os.path.exists(manifest_path):
            with open(manifest_path, encoding="utf-8") as fh:
                old = json.load(fh)
            if old.get("config") != json.loads(json.dumps(cfg.to_dict())):
                raise ConfigError("sweep config differs from the manifest being resumed")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump({"config": cfg.to_dict(), "csv": os.path.abspath(csv_path)}, fh, indent=2)

    fresh = not done
    with open(csv_path, "w" if fresh else "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        if fresh:
            writer.writeheader()
        for method in methods:
            for n_train in cfg.n_train_grid:
                for run in range(cfg.n_runs):
                    todo = [m for m in cfg.m_grid if (method.name, n_train, m, run) not in done]
                    if not todo:
                        continue
                    status, statistic = "ok", None
                    seed = _train_seed(cfg, method.name, n_train, run)
                    try:
                        seed, statistic = _train_one(cfg, method, n_train, run, sampler)
                    except (IndepTestError, ArithmeticError, ValueError) as exc:
                        status = f"train-failed: {type(exc).__name__}: {exc}"
                        logger.warning("%s run %d failed in training: %s", method.name, run, exc)
                    for m in todo:
                        row = {
                            "method": method.name,
                            "dataset": f"{cfg.dataset}-{cfg.dataset_param}",
                            "n_train": n_train,
                            "m": m,
                            "run": run,
                            "n_tests": cfg.n_tests,
                            "n_perm": cfg.n_perm,
                            "alpha": cfg.alpha,
                            "train_seed": seed,
                            "power": float("nan"),
                            "stderr": float("nan"),
                            "status": status,
                        }
                        if statistic is not None:
                            rng = make_rng(cfg.seed, stream_id("power", method.name, n_train, run, m))
                            try:
                                p, se = empirical_power(
                                    statistic, sampler, m, cfg.n_tests, rng, n_perm=cfg.n_perm, alpha=cfg.alpha
                                )
                                row["power"], row["stderr"] = p, se
                            except (IndepTestError, ArithmeticError, ValueError) as exc:
                                row["status"] = f"test-failed: {type(exc).__name__}: {exc}"
                        writer.writerow(row)
                        fh.flush()
                        done[_row_key(row)] = row
    return curves_from_rows(list(done.values()), cfg.n_tests)


def curves_from_rows(rows, n_tests=None):
    """Aggregate sweep rows into one PowerCurve per (method, n_train), skipping failed rows."""
    groups = {}
    for r in rows:
        if r["status"] != "ok" or not np.isfinite(r["power"]):
            continue
        groups.setdefault((r["method"], int(r["n_train"])), {}).setdefault(int(r["m"]), []).append(r["power"])
    curves = {}
    for (method, n_train), by_m in groups.items():
        sizes = sorted(by_m)
        power = [float(np.mean(by_m[m])) for m in sizes]
        stderr = [
            float(np.std(by_m[m], ddof=1) / math.sqrt(len(by_m[m]))) if len(by_m[m]) > 1 else float("nan")
            for m in sizes
        ]
        runs = max(len(v) for v in by_m.values())
        tests = n_tests if n_tests is not None else int(rows[0]["n_tests"])
        curves[(method, n_train)] = PowerCurve(method, sizes, power, stderr, runs, tests, n_train)
    return curves
