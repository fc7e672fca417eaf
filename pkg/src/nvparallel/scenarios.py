"""Named simulation, analysis and planning runs used by the command line.

Every runner returns ``(files, summary)`` where ``files`` maps output file
names to bytes.  Nothing here touches the file system or the clock, so a run
is a pure function of its configuration and seed.
"""
import io
import json

import numpy as np

from . import analysis, planning
from .config import check_params
from .errors import ConfigError
from .physics import CrosstalkModel
from .rng import substream
from .simulator import (
    PATTERNS,
    REINIT_RATES,
    CameraModel,
    ChargePolarizeSerial,
    Ionize,
    RatesConfig,
    Readout,
    SequenceConfig,
    baseline_walk,
    correlation_experiment,
    default_layout,
    ideal_correlation_signs,
    records_from_bytes,
    records_to_bytes,
    records_to_csv,
    render_frame,
    run_conditional_init,
    run_shots,
    run_unconditional_init,
    tune_scc_fidelities,
    usable_ids,
)
from .simulator.camera import pgm_bytes
from .simulator.experiments import CHARGE_INIT_SUCCESS
from .simulator.io import trajectory_to_csv
from .statmodels import CountHistogram, fit_bimodal, optimal_threshold, read_histogram

EXPOSURE_S = 50e-3
DEAD_TIME_S = 12e-3
DRIFT_OVERHEAD = 0.10

ALIASES = {"fig2-conditional-init": "conditional-init"}
ALIASES.update({f"fig4-{p}": f"correlation-{p}" for p in PATTERNS})


def canonical_name(name):
    return ALIASES.get(name, name)


def clean(obj):
    """Round floats to 9 significant digits so JSON output is stable."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.9g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


def to_json(obj):
    return (json.dumps(clean(obj), sort_keys=True, indent=2) + "\n").encode("utf-8")


def lab_time_s(n_shots):
    """Wall-clock estimate for ``n_shots`` camera shots including drift tracking."""
    return n_shots * (EXPOSURE_S + DEAD_TIME_S) * (1.0 + DRIFT_OVERHEAD)


def _matrix_csv(values, ids):
    buf = io.StringIO()
    buf.write("nv_id," + ",".join(str(i) for i in ids) + "\n")
    for i, row in zip(ids, values):
        buf.write(f"{i}," + ",".join(f"{v:.9g}" for v in row) + "\n")
    return buf.getvalue().encode("utf-8")


def _histogram_bytes(samples):
    hist = CountHistogram.from_samples(samples, bins=np.arange(np.floor(samples.min()), np.ceil(samples.max()) + 2.0))
    lines = ["# bin_center,count"] + [f"{c:.9g},{int(n)}" for c, n in zip(hist.centers, hist.bin_counts)]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _record_summary(rec):
    return {
        "n_shots": len(rec),
        "nv_ids": rec.nv_ids,
        "nvm_fraction_measured": rec.charge_bit.mean(axis=0),
        "nvm_fraction_true": rec.true_charge.mean(axis=0),
        "thresholds": rec.thresholds,
        "sequence_hash": rec.sequence_hash,
        "lab_time_estimate_s": lab_time_s(len(rec)),
    }


def _frames(rec, nvs, n_frames, seed):
    cam = CameraModel()
    rng = substream(seed, "frames")
    base = baseline_walk(cam, n_frames, rng)
    out = {}
    for i in range(n_frames):
        frame = render_frame(rec.counts[i], nvs, cam, rng, baseline_adu=base[i])
        out[f"frame_{i:05d}.pgm"] = pgm_bytes(frame)
    return out


def _record_files(rec, fmt):
    files = {}
    if fmt in ("binary", "both"):
        files["records.nvsr"] = records_to_bytes(rec)
    if fmt in ("csv", "both"):
        files["records.csv"] = records_to_csv(rec).encode("utf-8")
    if fmt not in ("binary", "csv", "both"):
        raise ConfigError(f"format must be binary, csv or both, not {fmt!r}")
    return files


# ---------------------------------------------------------------------------
# simulate

def simulate_charge_histogram(cfg):
    check_params(cfg, {"success_prob", "survival", "format", "frames"})
    p = cfg.params
    nvs = default_layout()
    ids = tuple(usable_ids(nvs))
    sub = [nv for nv in nvs if nv.id in ids]
    seq = SequenceConfig((
        Ionize(ids),
        ChargePolarizeSerial(ids, p.get("success_prob", CHARGE_INIT_SUCCESS)),
        Readout(50.0, survival=p.get("survival", 1.0)),
    ))
    rec = run_shots(sub, seq, cfg.shots or 100_000, cfg.seed, threads=cfg.threads)
    files = _record_files(rec, p.get("format", "binary"))
    files["histogram_nv0.csv"] = _histogram_bytes(rec.counts[:, 0])
    files.update(_frames(rec, sub, p.get("frames", 0), cfg.seed))
    return files, _record_summary(rec)


def simulate_conditional_init(cfg):
    check_params(cfg, {"attempts", "n_nvs", "rates"})
    p = cfg.params
    rates = RatesConfig.from_dict(p["rates"]) if "rates" in p else REINIT_RATES
    n_nvs = p.get("n_nvs", 10)
    attempts = p.get("attempts", 10)
    trials = cfg.shots or 100_000
    traj = run_conditional_init(n_nvs, attempts, rates, trials, cfg.seed, threads=cfg.threads)
    base = run_unconditional_init(n_nvs, rates, trials, cfg.seed, threads=cfg.threads)
    model = analysis.model_from_rates(rates, n_nvs)
    summary = {
        "rates": rates.to_dict(),
        "n_nvs": n_nvs,
        "n_trials": trials,
        "mean_by_attempt": traj.mean,
        "stderr_by_attempt": traj.stderr,
        "model": {"n0": model.n0, "c1": model.c1, "c2": model.c2, "steady_state": model.steady_state},
        "unconditional_mean": float(base.mean[0]),
        "unconditional_stderr": float(base.stderr[0]),
    }
    return {"trajectory.csv": trajectory_to_csv(traj).encode("utf-8")}, summary


def _simulate_correlation(pattern):
    def run(cfg):
        check_params(cfg, {"snr", "repolarization_prob", "format", "frames"})
        p = cfg.params
        nvs = tune_scc_fidelities(default_layout(), p.get("snr", 0.25))
        xt = CrosstalkModel(repolarization_prob=p.get("repolarization_prob", 0.5))
        rec = correlation_experiment(nvs, pattern, cfg.shots or 200_000, cfg.seed, crosstalk=xt, threads=cfg.threads)
        files = _record_files(rec, p.get("format", "binary"))
        by_id = {nv.id: nv for nv in nvs}
        files.update(_frames(rec, [by_id[int(i)] for i in rec.nv_ids], p.get("frames", 0), cfg.seed))
        cm = analysis.correlation_matrix(rec)
        files["correlation.csv"] = _matrix_csv(cm.values, rec.nv_ids)
        od = cm.off_diagonal()
        summary = _record_summary(rec)
        summary.update(pattern=pattern, mean_abs_r=float(np.abs(od).mean()), offdiag_std=float(od.std(ddof=1)),
                       sign_matches=_sign_matches(cm, pattern, nvs))
        return files, summary

    return run


def _sign_matches(cm, pattern, nvs):
    if pattern == "reference":
        return None
    ideal = ideal_correlation_signs(pattern, nvs, cm.nv_ids)
    iu = np.triu_indices(cm.size, 1)
    return int(np.sum(np.sign(cm.values[iu]) == ideal[iu]))


SIMULATE = {"charge-histogram": simulate_charge_histogram, "conditional-init": simulate_conditional_init}
SIMULATE.update({f"correlation-{p}": _simulate_correlation(p) for p in PATTERNS})


def simulate(cfg):
    name = canonical_name(cfg.scenario or "")
    if name not in SIMULATE:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; choose from {sorted(SIMULATE) + sorted(ALIASES)}")
    files, summary = SIMULATE[name](cfg)
    summary.update(scenario=name, seed=cfg.seed, config_hash=cfg.hash)
    files["summary.json"] = to_json(summary)
    return files, summary


# ---------------------------------------------------------------------------
# analyze / fit

def detect_kind(blob):
    if blob[:4] == b"NVSR":
        return "records"
    head = blob[:200].decode("utf-8", errors="replace")
    if head.startswith("# bin_center"):
        return "histogram"
    if head.startswith("attempt,mean"):
        return "trajectory"
    if head.startswith("# seed="):
        return "records-csv"
    raise ConfigError("cannot tell what kind of file this is")


def _load_input(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from None
    return detect_kind(blob), blob


def _fit_report(fit):
    th = optimal_threshold(fit.model)
    return {
        "model": fit.model.to_dict(),
        "stderr": fit.stderr,
        "chi2_dof": fit.chi2_dof,
        "method": fit.method,
        "n_samples": fit.n_samples,
        "threshold": th.threshold,
        "fidelity_nv0": th.fidelity_nv0,
        "fidelity_nvm": th.fidelity_nvm,
        "success_total": th.success_total,
    }


def _read_records(kind, blob, path):
    if kind == "records":
        return records_from_bytes(blob)
    from .simulator.io import read_records_csv

    return read_records_csv(path)


def fit(cfg):
    kind, blob = _load_input(cfg.input)
    check_params(cfg, {"nv_id"})
    if kind == "histogram":
        report = {"histogram": _fit_report(fit_bimodal(read_histogram(cfg.input)))}
    elif kind in ("records", "records-csv"):
        rec = _read_records(kind, blob, cfg.input)
        ids = [cfg.params["nv_id"]] if "nv_id" in cfg.params else [int(i) for i in rec.nv_ids]
        report = {str(i): _fit_report(fit_bimodal(rec.counts[:, rec.column(i)])) for i in ids}
    else:
        raise ConfigError(f"{cfg.input}: fit needs a histogram or shot records, got {kind}")
    report.update(input_kind=kind, config_hash=cfg.hash)
    return {"fit_report.json": to_json(report)}, report


def analyze(cfg):
    kind, blob = _load_input(cfg.input)
    if kind == "histogram":
        check_params(cfg, set())
        return fit(cfg)
    if kind == "trajectory":
        check_params(cfg, {"n_nvs"})
        table = np.loadtxt(io.StringIO(blob.decode("utf-8")), delimiter=",", skiprows=1, ndmin=2)
        res = analysis.fit_conditional_model(table[:, 1], cfg.params.get("n_nvs", 10), sigma=table[:, 3],
                                             attempts=table[:, 0])
        m = res.model
        report = {"n0": m.n0, "c1": m.c1, "c2": m.c2, "stderr": res.stderr, "residual_rms": res.residual_rms,
                  "steady_state": m.steady_state}
        report.update(input_kind=kind, config_hash=cfg.hash)
        return {"conditional_fit.json": to_json(report)}, report
    check_params(cfg, {"pattern", "refit_thresholds"})
    rec = _read_records(kind, blob, cfg.input)
    files = {}
    report = {"input_kind": kind, "n_shots": len(rec), "nv_ids": rec.nv_ids, "config_hash": cfg.hash}
    if cfg.params.get("refit_thresholds", True):
        fits = {int(i): fit_bimodal(rec.counts[:, k]) for k, i in enumerate(rec.nv_ids)}
        report["fits"] = {str(i): _fit_report(f) for i, f in fits.items()}
        rec = analysis.threshold_records(rec, {i: optimal_threshold(f.model).threshold for i, f in fits.items()})
    report["thresholds"] = rec.thresholds
    report["nvm_fraction_measured"] = rec.charge_bit.mean(axis=0)
    cm = analysis.correlation_matrix(rec)
    files["correlation.csv"] = _matrix_csv(cm.values, rec.nv_ids)
    od = cm.off_diagonal()
    report.update(mean_abs_r=float(np.abs(od).mean()), offdiag_std=float(od.std(ddof=1)),
                  correlation_stderr=float(cm.standard_errors[0, 1]))
    pattern = cfg.params.get("pattern")
    if pattern is None and cfg.scenario:
        name = canonical_name(cfg.scenario)
        pattern = name.split("-", 1)[1] if name.startswith("correlation-") else None
    if pattern is not None:
        report["pattern"] = pattern
        report["sign_matches"] = _sign_matches(cm, pattern, default_layout())
        report["n_pairs"] = len(od)
    files["analysis_report.json"] = to_json(report)
    return files, report


# ---------------------------------------------------------------------------
# plan

REFERENCE_ESTIMATES = {"bulk": 1100, "shallow": 800, "nanodiamond": 400, "cryogenic": 9100}


def plan(cfg):
    check_params(cfg, {"t_interrogate_s", "density", "n_max"})
    p = cfg.params
    ti = p.get("t_interrogate_s", 100e-6)
    density = p.get("density", 0.59)
    n_values = np.unique(np.round(np.logspace(0, np.log10(p.get("n_max", 10_000)), 41)).astype(int))
    slow = planning.modality_preset("conventional-serial", ti)
    fast = planning.modality_preset("scc-parallel", ti)
    scal = planning.scalability_report(density)
    for name, row in scal.items():
        ref = REFERENCE_ESTIMATES[name]
        row["reference_estimate"] = ref
        row["relative_deviation"] = row["n_max"] / ref - 1.0
        row["flagged"] = abs(row["relative_deviation"]) > 0.05
    aod, bound = planning.binding_bandwidth_bound(density)
    report = {
        "t_interrogate_s": ti,
        "crossover_n": planning.crossover_n(slow, fast),
        "speedup_n10": float(planning.speedup(slow, fast, 10)),
        "speedup_n100": float(planning.speedup(slow, fast, 100)),
        "scalability": scal,
        "binding_aod": aod,
        "binding_bandwidth_bound": bound,
        "config_hash": cfg.hash,
    }
    files = {
        "independent_vs_n.csv": planning.independent_curves(n_values, ti).encode("utf-8"),
        "independent_vs_t.csv": planning.interrogation_curves(np.logspace(-6, -1, 51)).encode("utf-8"),
        "correlated_vs_n.csv": planning.correlated_curves(n_values[n_values >= 2], ti).encode("utf-8"),
        "beam_size.csv": planning.beam_size_curves(np.linspace(0.02, 1.0, 50), density).encode("utf-8"),
        "plan_report.json": to_json(report),
    }
    return files, report
