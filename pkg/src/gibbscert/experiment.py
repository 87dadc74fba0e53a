"""Sweep orchestration and the Monte Carlo validity harness.

A sweep runs (family x grid point x repetition) independent draws: split the
pool, sample a prior hypothesis, sample a posterior hypothesis via SGLD,
evaluate the configured certificate, and record the held-out test risk.  The
validity harness replaces the test set with a true-risk oracle and counts
how often kl(emp_risk || true_risk) exceeds the certified tau.
"""

from __future__ import annotations

import csv
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bounds import CertificateInput, bound_cor4, bound_cor5, bound_eq8, bound_eq9
from .config import ConfigError, ExperimentConfig, resolve_data_path
from .data import (
    BlobsSpec,
    Dataset,
    RunRecord,
    SyntheticTask,
    load_idx_dataset,
    make_synthetic,
    split_dataset,
)
from .klcalc import kl
from .measures import (
    GibbsObjective,
    MuFamily,
    MuSpec,
    NormKind,
    OmegaFamily,
    OmegaSpec,
    mu_value,
    omega_value,
)
from .model import Architecture, LossKind, ParamVector, empirical_risk, init_params
from .sampler import SgldConfig, sgd_run, sgld_run

_BOUND_FNS = {"cor4": bound_cor4, "cor5": bound_cor5, "eq8": bound_eq8, "eq9": bound_eq9}

# The true risk fed to the kl statistic is clamped into the open unit
# interval; an oracle can legitimately return exactly 0 on separated tasks.
_ORACLE_CLIP = 1e-12


@dataclass
class TaskBundle:
    pool: Dataset
    test: Dataset
    synthetic: SyntheticTask | None

    @property
    def has_oracle(self) -> bool:
        return self.synthetic is not None

    def oracle(self, params: ParamVector) -> float:
        if self.synthetic is None:
            raise ConfigError("[task] oracle: this task has no true-risk oracle")
        return self.synthetic.oracle(params)


def subseed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Counter-based derivation: the key tuple indexes a reproducible stream."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))


def build_task(cfg: ExperimentConfig, master_seed: int) -> TaskBundle:
    if cfg.task.kind == "idx":
        pool = load_idx_dataset(
            resolve_data_path(cfg.task.train_images),
            resolve_data_path(cfg.task.train_labels),
        )
        if cfg.task.test_images:
            test = load_idx_dataset(
                resolve_data_path(cfg.task.test_images),
                resolve_data_path(cfg.task.test_labels),
                n_classes=pool.n_classes,
            )
        else:
            test = Dataset(np.zeros((0, pool.dim)), np.zeros(0, dtype=int), pool.n_classes)
        return TaskBundle(pool, test, None)

    spec = BlobsSpec(
        dim=cfg.task.dim,
        separation=cfg.task.separation,
        sigma=cfg.task.sigma,
        weight1=cfg.task.weight1,
        oracle_mode=cfg.task.oracle,
        hidden_samples=cfg.task.hidden_samples,
    )
    if spec.oracle_mode == "closed_form" and cfg.model.hidden:
        raise ConfigError(
            "[task] oracle: closed_form needs a linear model; set oracle = hidden"
        )
    synthetic = make_synthetic(
        spec, subseed(master_seed, 0), pool_size=cfg.task.pool_size,
        test_size=cfg.task.test_size,
    )
    return TaskBundle(synthetic.pool, synthetic.test, synthetic)


def make_arch(cfg: ExperimentConfig, input_dim: int, n_classes: int) -> Architecture:
    dims = (input_dim,) + cfg.model.hidden + (n_classes,)
    return Architecture(dims, leaky_slope=cfg.model.leaky_slope)


def _fresh_init(arch: Architecture):
    """Probe reinitialization: retrain-from-scratch draws a new seeded init."""
    return lambda rng: init_params(arch, rng).values


def _sampler_cfg(cfg: ExperimentConfig, alpha: float, seed: int) -> SgldConfig:
    s = cfg.sampler
    return SgldConfig(
        alpha=alpha,
        epochs=s.epochs,
        batch_size=s.batch_size,
        lr_init=s.lr_init,
        lr_decay_on_fail=s.lr_decay_on_fail,
        lr_floor=s.lr_floor,
        lr_epoch_decay=s.lr_epoch_decay,
        max_wraparounds=s.max_wraparounds,
        seed=seed,
    )


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def _build_mu_spec(cfg: ExperimentConfig, alpha: float, beta: float,
                   init_ref: ParamVector, sgd_ref: ParamVector | None,
                   predictor) -> MuSpec:
    family = MuFamily(cfg.mu.family)
    norm = NormKind(cfg.mu.norm) if cfg.mu.norm else None
    if family is MuFamily.EMP_RISK:
        return MuSpec(family, alpha=alpha)
    if family is MuFamily.REGULARIZED:
        return MuSpec(family, alpha=alpha, norm=norm, beta=beta, init_ref=init_ref)
    if family is MuFamily.DISTANCE_TO_REF:
        return MuSpec(family, alpha=alpha, norm=norm, init_ref=init_ref,
                      sgd_ref=sgd_ref, predictor=predictor)
    return MuSpec(family, alpha=alpha, predictor=predictor)


def _load_predictor_if_any(cfg: ExperimentConfig):
    if not cfg.mu.predictor:
        return None
    from .neural import load_predictor

    return load_predictor(resolve_data_path(cfg.mu.predictor))


@dataclass(frozen=True)
class _RunSpec:
    family: str
    grid_index: int
    alpha: float | None  # None when the grid value is beta
    beta: float | None
    repetition: int
    run_index: int


def _grid_for(cfg: ExperimentConfig, m: int) -> list[tuple[float | None, float | None]]:
    """(alpha, beta) pairs swept for a family whose learning sample has size m."""
    reg_beta = cfg.mu.beta if cfg.mu.family == "regularized" else None
    if cfg.sweep.mode == "alpha":
        grid = np.geomspace(math.sqrt(m), m, cfg.sweep.alpha_points)
        return [(float(a), reg_beta) for a in grid]
    fixed_alpha = cfg.mu.alpha if cfg.mu.alpha > 0 else float(m)
    if cfg.sweep.mode == "beta":
        return [(fixed_alpha, float(b)) for b in cfg.sweep.beta_grid]
    return [(fixed_alpha, reg_beta)]


def _family_ratio(cfg: ExperimentConfig, family: str) -> float:
    return cfg.sweep.ratio if family == "cor5" else 0.0


def _execute_run(cfg: ExperimentConfig, bundle: TaskBundle, predictor,
                 master_seed: int, spec: _RunSpec) -> RunRecord:
    t0 = time.perf_counter()
    family = spec.family
    ratio = _family_ratio(cfg, family)
    ss = subseed(master_seed, 1, spec.run_index)
    split_ss, init_ss, prior_ss, post_ss, sgd_ss = ss.spawn(5)

    split = split_dataset(bundle.pool, ratio, np.random.default_rng(split_ss),
                          test=bundle.test)
    m = split.m
    arch = make_arch(cfg, bundle.pool.dim, bundle.pool.n_classes)
    init = init_params(arch, np.random.default_rng(init_ss))

    alpha = spec.alpha if spec.alpha is not None else float(m)
    beta = spec.beta

    # Distance-style measures reference a plain SGD run of 1..10 epochs; the
    # posterior chain then starts from that reference.
    sgd_ref = None
    start = init
    mu_family = MuFamily(cfg.mu.family)
    if mu_family in (MuFamily.DISTANCE_TO_REF, MuFamily.NEURAL):
        sgd_rng = np.random.default_rng(sgd_ss)
        sgd_epochs = int(sgd_rng.integers(1, 11))
        risk_obj = GibbsObjective(MuSpec(MuFamily.EMP_RISK, alpha=1.0), arch, split.S)
        sgd_cfg = _sampler_cfg(cfg, alpha=1.0, seed=_seed_int(sgd_ss))
        sgd_values = sgd_run(risk_obj, init.values, sgd_cfg,
                             epochs_override=sgd_epochs, reinit=_fresh_init(arch))
        sgd_ref = ParamVector(arch, sgd_values)
        start = sgd_ref

    mu_spec = _build_mu_spec(cfg, alpha, beta if beta is not None else 1.0,
                             init, sgd_ref, predictor)

    # Posterior draw h ~ exp(-mu(., S)); the gap-to-reference measure keeps
    # the SGD endpoint itself as the certified hypothesis.
    skip_sgld = (mu_family is MuFamily.DISTANCE_TO_REF
                 and mu_spec.norm is NormKind.GAP)
    if skip_sgld:
        posterior = sgd_ref
    else:
        objective = GibbsObjective(mu_spec, arch, split.S, split.T)
        post_cfg = _sampler_cfg(cfg, alpha=alpha, seed=_seed_int(post_ss))
        posterior = ParamVector(
            arch, sgld_run(objective, start.values, post_cfg, reinit=_fresh_init(arch)))

    # Prior draw h' ~ P per family.
    prior_rng = np.random.default_rng(prior_ss)
    alpha_prime = cfg.bound.alpha_prime if cfg.bound.alpha_prime >= 0 else alpha
    omega_post = omega_prior = 0.0
    if family == "cor5":
        prior_init = init_params(arch, prior_rng)
        prior_obj = GibbsObjective(mu_spec, arch, split.S_prime, split.T)
        prior_cfg = _sampler_cfg(cfg, alpha=alpha, seed=_seed_int(prior_ss))
        prior = ParamVector(
            arch, sgld_run(prior_obj, prior_init.values, prior_cfg,
                           reinit=_fresh_init(arch)))
        omega_spec = OmegaSpec(OmegaFamily.GIBBS_ON_PRIOR_SAMPLE, mu=mu_spec)
        omega_post = omega_value(omega_spec, posterior, split=split)
        omega_prior = omega_value(omega_spec, prior, split=split)
    elif family == "eq9":
        prior_init = init_params(arch, prior_rng)
        prior_spec = MuSpec(MuFamily.EMP_RISK, alpha=alpha_prime)
        prior_obj = GibbsObjective(prior_spec, arch, split.S)
        prior_cfg = _sampler_cfg(cfg, alpha=alpha_prime, seed=_seed_int(prior_ss))
        prior = ParamVector(
            arch, sgld_run(prior_obj, prior_init.values, prior_cfg,
                           reinit=_fresh_init(arch)))
    else:
        prior = init_params(arch, prior_rng)

    emp_risk = empirical_risk(posterior, split.S.X, split.S.y, LossKind.ZERO_ONE)
    inp = CertificateInput(
        m=m,
        m_prime=split.m_prime,
        delta=cfg.bound.delta,
        emp_risk=emp_risk,
        mu_post=mu_value(mu_spec, posterior, sample=split.S, test=split.T),
        mu_prior=mu_value(mu_spec, prior, sample=split.S, test=split.T),
        omega_post=omega_post,
        omega_prior=omega_prior,
        alpha=alpha,
        alpha_prime=alpha_prime if family == "eq9" else 0.0,
        risk_prime_post=empirical_risk(posterior, split.S.X, split.S.y,
                                       LossKind.BOUNDED_CE),
        risk_prime_prior=empirical_risk(prior, split.S.X, split.S.y,
                                        LossKind.BOUNDED_CE),
    )
    certificate = _BOUND_FNS[family](inp)

    if len(split.T):
        test_risk = empirical_risk(posterior, split.T.X, split.T.y, LossKind.ZERO_ONE)
    else:
        test_risk = float("nan")

    return RunRecord(
        seed=master_seed,
        config_digest=cfg.digest(),
        family=family,
        run_index=spec.run_index,
        alpha=alpha,
        beta=beta,
        ratio=ratio,
        m=m,
        m_prime=split.m_prime,
        delta=cfg.bound.delta,
        emp_risk=emp_risk,
        test_risk=test_risk,
        mu_post=inp.mu_post,
        mu_prior=inp.mu_prior,
        omega_post=omega_post,
        omega_prior=omega_prior,
        risk_prime_post=inp.risk_prime_post,
        risk_prime_prior=inp.risk_prime_prior,
        tau=certificate.tau,
        risk_upper=certificate.risk_upper,
        clamped=certificate.clamped,
        wall_time=time.perf_counter() - t0,
    )


def plan_sweep(cfg: ExperimentConfig, bundle: TaskBundle) -> list[_RunSpec]:
    specs = []
    run_index = 0
    for family in cfg.bound.families:
        ratio = _family_ratio(cfg, family)
        m = len(bundle.pool) - int(ratio * len(bundle.pool))
        for grid_index, (alpha, beta) in enumerate(_grid_for(cfg, m)):
            for rep in range(cfg.sweep.repetitions):
                specs.append(_RunSpec(family, grid_index, alpha, beta, rep, run_index))
                run_index += 1
    return specs


def run_sweep(cfg: ExperimentConfig, master_seed: int):
    """Execute the full sweep; returns (records, failures).

    Failures are (run description, error message) pairs: a failed sampler
    run is reported and skipped without aborting the sweep.
    """
    bundle = build_task(cfg, master_seed)
    predictor = _load_predictor_if_any(cfg)
    specs = plan_sweep(cfg, bundle)

    records: list[RunRecord] = []
    failures: list[tuple[str, str]] = []

    def work(spec: _RunSpec):
        try:
            return spec.run_index, _execute_run(cfg, bundle, predictor, master_seed, spec), None
        except Exception as exc:  # noqa: BLE001 - per-run isolation is the contract
            label = f"{spec.family} grid={spec.grid_index} rep={spec.repetition}"
            return spec.run_index, None, (label, str(exc))

    if cfg.sweep.workers == 1:
        results = [work(spec) for spec in specs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.sweep.workers) as pool:
            results = list(pool.map(work, specs))

    for _, record, failure in sorted(results, key=lambda item: item[0]):
        if record is not None:
            records.append(record)
        else:
            failures.append(failure)
    return records, failures


@dataclass(frozen=True)
class FamilyValidity:
    family: str
    trials: int
    violations: int
    rate: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class ValidityReport:
    trials: int
    delta: float
    results: tuple[FamilyValidity, ...]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        out = [f"validity check: {self.trials} trials at delta = {self.delta}"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            out.append(
                f"  {r.family}: {r.violations}/{r.trials} violations "
                f"(rate {r.rate:.4f} vs threshold {r.threshold:.4f}) {status}"
            )
        return out


def validate_bounds(cfg: ExperimentConfig, trials: int, master_seed: int,
                    force_tau: str | None = None) -> ValidityReport:
    """Empirically test the 1 - delta coverage on a synthetic task.

    Each trial draws fresh samples from the generating distribution, samples
    the prior and posterior hypotheses, and checks whether
    kl(emp_risk || oracle_risk) exceeds the certified tau.  The harness uses
    the scaled differentiable risk as the parametric function.
    """
    if trials < 1:
        raise ConfigError("validate: trials must be at least 1")
    bundle = build_task(cfg, master_seed)
    if not bundle.has_oracle:
        raise ConfigError("[task] kind: the validity harness needs a synthetic task")
    if cfg.mu.family != "emp_risk":
        raise ConfigError("[mu] family: the validity harness supports emp_risk only")
    task = bundle.synthetic
    arch = make_arch(cfg, bundle.pool.dim, bundle.pool.n_classes)

    m = cfg.task.sample_size
    ratio = cfg.sweep.ratio
    m_prime = int(round(m * ratio / (1.0 - ratio)))
    delta = cfg.bound.delta
    alpha = cfg.mu.alpha if cfg.mu.alpha > 0 else float(m)
    alpha_prime = cfg.bound.alpha_prime if cfg.bound.alpha_prime >= 0 else alpha

    counts = {family: 0 for family in cfg.bound.families}
    for trial in range(trials):
        ss = subseed(master_seed, 2, trial)
        s_ss, sp_ss, init_ss, post_ss, prior_ss = ss.spawn(5)
        sample = task.sample(m, np.random.default_rng(s_ss))
        init = init_params(arch, np.random.default_rng(init_ss))
        mu_spec = MuSpec(MuFamily.EMP_RISK, alpha=alpha)

        post_cfg = _sampler_cfg(cfg, alpha=alpha, seed=_seed_int(post_ss))
        posterior_values = sgld_run(GibbsObjective(mu_spec, arch, sample),
                                    init.values, post_cfg, reinit=_fresh_init(arch))
        posterior = ParamVector(arch, posterior_values)

        emp = empirical_risk(posterior, sample.X, sample.y, LossKind.ZERO_ONE)
        true_risk = min(max(task.oracle(posterior), _ORACLE_CLIP), 1.0 - _ORACLE_CLIP)
        stat = kl(emp, true_risk)

        prior_rng = np.random.default_rng(prior_ss)
        mu_post = mu_value(mu_spec, posterior, sample=sample)
        r_prime_post = empirical_risk(posterior, sample.X, sample.y, LossKind.BOUNDED_CE)

        for family in cfg.bound.families:
            if family == "cor5":
                prior_sample = task.sample(m_prime, np.random.default_rng(sp_ss))
                prior_init = init_params(arch, prior_rng)
                prior_cfg = _sampler_cfg(cfg, alpha=alpha, seed=_seed_int(sp_ss))
                prior_values = sgld_run(GibbsObjective(mu_spec, arch, prior_sample),
                                        prior_init.values, prior_cfg,
                                        reinit=_fresh_init(arch))
                prior = ParamVector(arch, prior_values)
                omega_post = mu_value(mu_spec, posterior, sample=prior_sample)
                omega_prior = mu_value(mu_spec, prior, sample=prior_sample)
            elif family == "eq9":
                prior_init = init_params(arch, prior_rng)
                prior_spec = MuSpec(MuFamily.EMP_RISK, alpha=alpha_prime)
                prior_cfg = _sampler_cfg(cfg, alpha=alpha_prime, seed=_seed_int(sp_ss))
                prior_values = sgld_run(GibbsObjective(prior_spec, arch, sample),
                                        prior_init.values, prior_cfg,
                                        reinit=_fresh_init(arch))
                prior = ParamVector(arch, prior_values)
                omega_post = omega_prior = 0.0
            else:
                prior = init_params(arch, prior_rng)
                omega_post = omega_prior = 0.0

            inp = CertificateInput(
                m=m,
                m_prime=m_prime if family == "cor5" else 0,
                delta=delta,
                emp_risk=emp,
                mu_post=mu_post,
                mu_prior=mu_value(mu_spec, prior, sample=sample),
                omega_post=omega_post,
                omega_prior=omega_prior,
                alpha=alpha,
                alpha_prime=alpha_prime if family == "eq9" else 0.0,
                risk_prime_post=r_prime_post,
                risk_prime_prior=empirical_risk(prior, sample.X, sample.y,
                                                LossKind.BOUNDED_CE),
            )
            if force_tau == "inf":
                tau = math.inf
            elif force_tau == "zero":
                tau = 0.0
            else:
                tau = max(_BOUND_FNS[family](inp).tau, 0.0)
            if stat > tau:
                counts[family] += 1

    threshold = delta + 2.0 * math.sqrt(delta * (1.0 - delta) / trials)
    results = tuple(
        FamilyValidity(
            family=family,
            trials=trials,
            violations=count,
            rate=count / trials,
            threshold=threshold,
            passed=count / trials <= threshold,
        )
        for family, count in counts.items()
    )
    return ValidityReport(trials=trials, delta=delta, results=results)


PLOT_HEADER = ("group", "family", "mean_bound", "std_bound",
               "mean_test_risk", "std_test_risk", "n")


def plot_rows(records, group_by: str):
    """Aggregate records into plot rows; returns (rows, warnings)."""
    if group_by not in ("alpha", "beta", "family"):
        raise ValueError(f"group_by must be alpha, beta or family, got {group_by!r}")
    warnings = []
    if not records:
        warnings.append("no records to aggregate; emitting a header-only table")
        return [], warnings

    def group_key(record):
        if group_by == "alpha":
            return record.alpha
        if group_by == "beta":
            return record.beta if record.beta is not None else ""
        return record.family

    cells: dict[tuple, list] = {}
    for record in records:
        cells.setdefault((record.family, group_key(record)), []).append(record)

    # Group values may mix floats and placeholders across merged record
    # files, so order by their string form.
    rows = []
    for (family, group), members in sorted(
        cells.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))
    ):
        bounds_arr = np.array([r.risk_upper for r in members])
        risks = np.array([r.test_risk for r in members])
        n = len(members)
        if n == 1:
            warnings.append(
                f"group {group!r} family {family}: single repetition, std reported as 0"
            )
        rows.append((
            group, family,
            float(np.mean(bounds_arr)),
            float(np.std(bounds_arr, ddof=1)) if n > 1 else 0.0,
            float(np.mean(risks)),
            float(np.std(risks, ddof=1)) if n > 1 else 0.0,
            n,
        ))
    return rows, warnings


def write_plot_csv(records, group_by: str, path) -> list[str]:
    rows, warnings = plot_rows(records, group_by)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLOT_HEADER)
        writer.writerows(rows)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    return warnings
