"""Command-line interface.

    telesim simulate --config sim.yaml --out runs/a
    telesim identify runs/a/log.csv --out runs/a/fit
    telesim figures runs/a/fit/participant_model.txt runs/a/fit/environment_model.txt --out figs
    telesim psych --config staircase.yaml --out runs/psych
    telesim sweep --config sweep.yaml --out runs/sweep

Every command writes ``manifest.json`` next to its outputs. Passing that
manifest back as ``--config`` repeats the run and reproduces the outputs
byte for byte.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    Section,
    dump_sim_config,
    dumps_json,
    load_document,
    parse_sim_config,
)
from .engine import LogSchemaError, TimeSeriesLog, run_simulation
from .exceptions import ConfigError, SimulationDiverged, TelesimError
from .psychophysics import (
    PsychometricFitter,
    PsychometricFunction,
    PsychometricObserver,
    StaircaseState,
    TeleoperatedObserver,
    records_to_csv,
    run_constant_stimuli,
    run_staircase,
    staircase_threshold,
)
from .sysid import (
    SYSTEMS,
    bode,
    identify_log,
    model_from_file,
    model_to_dict,
    step_response,
    write_key_values,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Reporter:
    def __init__(self, quiet):
        self.quiet = quiet

    def info(self, message):
        if not self.quiet:
            print(message)

    @staticmethod
    def error(message):
        print(f"telesim: error: {message}", file=sys.stderr)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _load(args, command) -> Section:
    """Root section of ``--config``; unwraps manifests of the same command."""
    if args.config is None:
        return Section({})
    root = load_document(args.config)
    if root.has("tool") and root.has("command"):
        if root.raw("command") != command:
            raise root.error(f"manifest is for command {root.raw('command')!r}, not {command!r}", "command")
        for key in ("tool", "version", "config_path", "output_dir", "seed"):
            root.raw(key)
        section = root.child("config")
        root.finish()
        return section
    return root


def _write_manifest(out: Path, command, args, resolved, seed):
    manifest = {
        "tool": "telesim",
        "version": __version__,
        "command": command,
        "config_path": str(Path(args.config).resolve()) if args.config else None,
        "output_dir": str(out.resolve()),
        "seed": seed,
        "config": resolved,
    }
    (out / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- simulate


def cmd_simulate(args, rep):
    if args.config is None:
        raise ConfigError("simulate needs --config")
    config = parse_sim_config(_load(args, "simulate"), seed_override=args.seed)
    out = _out_dir(args)
    log = run_simulation(config)
    log.to_csv(out / "log.csv")
    _write_manifest(out, "simulate", args, dump_sim_config(config), int(config.rng_seed))
    rep.info(f"wrote {len(log)} samples to {out / 'log.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- identify

_IDENTIFY_DEFAULTS = dict(detrend=False, conversion="euler", prediction="one_step", excitation_alpha=1e-6)


def _identify_options(section: Section, args):
    opts = dict(
        detrend=section.flag("detrend", _IDENTIFY_DEFAULTS["detrend"]),
        conversion=section.text("conversion", _IDENTIFY_DEFAULTS["conversion"]),
        prediction=section.text("prediction", _IDENTIFY_DEFAULTS["prediction"]),
        excitation_alpha=section.number("excitation_alpha", _IDENTIFY_DEFAULTS["excitation_alpha"]),
    )
    if getattr(args, "prediction", None):
        opts["prediction"] = args.prediction
    if opts["conversion"] not in ("euler", "tustin", "zoh"):
        raise section.error(f"unknown conversion {opts['conversion']!r}", "conversion")
    if opts["prediction"] not in ("one_step", "simulation"):
        raise section.error(f"unknown prediction {opts['prediction']!r}", "prediction")
    return opts


def _identify_all(log, systems, opts, rep):
    """Fit each system; returns {name: (model, report) or exception}."""
    results = {}
    for name in systems:
        try:
            results[name] = identify_log(log, name, **opts)
        except (TelesimError, ValueError) as exc:
            results[name] = exc
            rep.error(f"{name} fit failed: {type(exc).__name__}: {exc}")
    return results


def cmd_identify(args, rep):
    section = _load(args, "identify")
    log_path = args.log if args.log else section.text("log", required=True)
    if args.log:
        section.raw("log")
    systems = section.raw("systems", list(SYSTEMS))
    if args.system:
        systems = list(SYSTEMS) if args.system == "both" else [args.system]
    if not isinstance(systems, list) or not systems or any(s not in SYSTEMS for s in systems):
        raise section.error(f"expected a non-empty list drawn from {sorted(SYSTEMS)}", "systems")
    opts = _identify_options(section, args)
    section.finish()

    log = TimeSeriesLog.from_csv(Path(log_path))
    out = _out_dir(args)
    results = _identify_all(log, systems, opts, rep)
    ok = 0
    for name, result in results.items():
        if isinstance(result, Exception):
            write_key_values(out / f"{name}_error.txt",
                             {"system": name, "error": type(result).__name__, "message": str(result)})
            continue
        ok += 1
        model, report = result
        write_key_values(out / f"{name}_model.txt", model_to_dict(model, report, system=name))
        rep.info(
            f"{name}: gain={model.gain:.6g} wn={model.natural_frequency:.6g} "
            f"zeta={model.damping_ratio:.6g} fit={report.percent_fit:.4f}% "
            f"FPE={report.fpe:.4g} MSE={report.mse:.4g}"
        )
    resolved = dict(log=str(Path(log_path).resolve()), systems=systems, **opts)
    _write_manifest(out, "identify", args, resolved, None)
    return EXIT_OK if ok else EXIT_NUMERIC


# ---------------------------------------------------------------- figures


def cmd_figures(args, rep):
    from .plotting import plot_bode, plot_step

    section = _load(args, "figures")
    inputs = args.inputs or section.raw("inputs", [])
    if args.inputs:
        section.raw("inputs")
    if not isinstance(inputs, list) or not inputs:
        raise section.error("need at least one input file (log CSV or model files)", "inputs")
    step_duration = section.number("step_duration", 1.0)
    step_dt = section.number("dt", 1e-3)
    omega_min = section.number("omega_min", 1.0)
    omega_max = section.number("omega_max", 1000.0)
    n_freqs = section.integer("n_freqs", 400)
    if not (0 < omega_min < omega_max) or n_freqs < 2 or not (0 < step_dt <= step_duration):
        raise section.error("need 0 < omega_min < omega_max, n_freqs >= 2, 0 < dt <= step_duration")
    opts = _identify_options(section.child("identify"), args)
    section.finish()

    models = []
    if len(inputs) == 1 and str(inputs[0]).endswith(".csv"):
        log = TimeSeriesLog.from_csv(Path(inputs[0]))
        for name, result in _identify_all(log, list(SYSTEMS), opts, rep).items():
            if not isinstance(result, Exception):
                models.append((name, result[0]))
        if not models:
            raise SimulationDiverged(0, "no system could be identified from the log")
    else:
        for i, path in enumerate(inputs):
            try:
                label, model = model_from_file(path)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"invalid model file {path}: {exc}") from None
            models.append((label or f"model{i + 1}", model))

    out = _out_dir(args)
    omega = np.logspace(np.log10(omega_min), np.log10(omega_max), n_freqs)
    step_traces, bode_traces = [], []
    for label, model in models:
        t, y = step_response(model, step_duration, step_dt)
        mag, phase = bode(model, omega)
        step_traces.append((label, t, y))
        bode_traces.append((label, omega, mag, phase))

    labels = [label for label, _ in models]
    t = step_traces[0][1]
    step_rows = zip(t.tolist(), *(y.tolist() for _, _, y in step_traces))
    (out / "step_response.csv").write_text(
        _csv_text(["time"] + labels, step_rows), encoding="utf-8")
    bode_cols = [c for label in labels for c in (f"{label}_magnitude_db", f"{label}_phase_deg")]
    bode_rows = zip(omega.tolist(), *(col.tolist() for _, _, m, p in bode_traces for col in (m, p)))
    (out / "bode.csv").write_text(_csv_text(["omega"] + bode_cols, bode_rows), encoding="utf-8")
    plot_step(step_traces, out / "step_response.svg")
    plot_bode(bode_traces, out / "bode.svg")

    resolved = dict(inputs=[str(Path(p).resolve()) for p in inputs], step_duration=step_duration,
                    dt=step_dt, omega_min=omega_min, omega_max=omega_max, n_freqs=n_freqs,
                    identify=opts)
    _write_manifest(out, "figures", args, resolved, None)
    rep.info(f"wrote step and Bode plots for {', '.join(labels)} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- psych


class _AlwaysCorrect:
    def __call__(self, reference, comparison, rng):
        rng.uniform()
        return comparison > reference


def _parse_observer(section: Section):
    kind = section.text("type", "psychometric")
    if kind == "always_correct":
        section.finish()
        return _AlwaysCorrect(), {"type": kind}
    if kind not in ("psychometric", "teleoperated"):
        raise section.error(f"unknown observer type {kind!r}", "type")
    pf = section.build(
        PsychometricFunction,
        threshold_mu=section.number("threshold_mu", 0.0),
        slope_sigma=section.number("slope_sigma", 1.0),
        lapse_rate=section.number("lapse_rate", 0.02),
    )
    resolved = {"type": kind, "threshold_mu": pf.threshold_mu, "slope_sigma": pf.slope_sigma,
                "lapse_rate": pf.lapse_rate}
    if kind == "psychometric":
        section.finish()
        return PsychometricObserver(pf), resolved
    template = parse_sim_config(section.child("simulation", {"duration": 2.0}))
    section.finish()
    resolved["simulation"] = dump_sim_config(template)
    return TeleoperatedObserver(template, pf), resolved


def cmd_psych(args, rep):
    if args.config is None:
        raise ConfigError("psych needs --config")
    section = _load(args, "psych")
    paradigm = section.text("paradigm", required=True)
    seed = section.integer("seed", 0) if args.seed is None else int(args.seed)
    if args.seed is not None:
        section.raw("seed")
    reference = section.number("reference", 0.0)
    observer, observer_resolved = _parse_observer(section.child("observer"))
    resolved = {"paradigm": paradigm, "seed": seed, "reference": reference, "observer": observer_resolved}
    summary = {"paradigm": paradigm, "seed": seed}

    if paradigm == "staircase":
        sc = section.child("staircase")
        floor = sc.raw("floor", None)
        if floor is not None:
            floor = sc.number("floor")
        initial = sc.build(
            StaircaseState,
            current_level=sc.number("start_level", 1.0),
            step_size=sc.number("step_size", 0.1),
            up_count=sc.integer("up_count", 1),
            down_count=sc.integer("down_count", 2),
            reversal_target=sc.integer("reversal_target", 12),
            floor=floor,
            max_trials=sc.integer("max_trials", 1000),
        )
        sc.finish()
        section.finish()
        resolved["staircase"] = dict(start_level=initial.current_level, step_size=initial.step_size,
                                     up_count=initial.up_count, down_count=initial.down_count,
                                     reversal_target=initial.reversal_target, floor=initial.floor,
                                     max_trials=initial.max_trials)
        records, final = run_staircase(initial, reference, observer, seed)
        summary.update(
            n_trials=final.trial_count,
            n_reversals=len(final.reversal_levels),
            final_level=final.current_level,
            terminated_by="reversals" if len(final.reversal_levels) >= final.reversal_target else "max_trials",
            reached_floor=final.floor is not None and final.current_level == final.floor,
        )
        if len(final.reversal_levels) >= 4:
            summary["threshold"] = staircase_threshold(final)
        summary["reversal_levels"] = " ".join(repr(float(v)) for v in final.reversal_levels)
    elif paradigm == "constant_stimuli":
        cs = section.child("constant_stimuli")
        levels = cs.number_list("levels", required=True)
        trials = cs.integer("trials_per_level", 20)
        cs.finish()
        section.finish()
        resolved["constant_stimuli"] = {"levels": levels, "trials_per_level": trials}
        try:
            records = run_constant_stimuli([reference + v for v in levels], trials, reference, observer, seed)
        except TelesimError as exc:
            raise cs.error(str(exc)) from None
        summary["n_trials"] = len(records)
        x = np.array([r.comparison - r.reference for r in records])
        y = np.array([r.response_greater for r in records], dtype=float)
        for level in levels:
            mask = np.isclose(x, level)
            summary[f"p_greater[{level!r}]"] = float(y[mask].mean())
        lapse = observer_resolved.get("lapse_rate", 0.0)
        try:
            fitter = PsychometricFitter(lapse_rate=lapse).fit(x, y)
            summary.update(threshold_mu=fitter.threshold_mu_, slope_sigma=fitter.slope_sigma_,
                           jnd=fitter.jnd_)
        except TelesimError as exc:
            summary["fit_error"] = f"{type(exc).__name__}: {exc}"
    else:
        raise section.error("paradigm must be 'staircase' or 'constant_stimuli'", "paradigm")

    out = _out_dir(args)
    (out / "trials.csv").write_text(records_to_csv(records), encoding="utf-8")
    write_key_values(out / "summary.txt", summary)
    _write_manifest(out, "psych", args, resolved, seed)
    rep.info(f"{paradigm}: {len(records)} trials written to {out / 'trials.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def _set_path(tree, dotted, value, section):
    keys = dotted.split(".")
    node = tree
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise section.error(f"parameter path {dotted!r} does not exist", "parameter")
        node = node[key]
    if keys[-1] not in node:
        raise section.error(f"parameter path {dotted!r} does not exist", "parameter")
    node[keys[-1]] = value


def cmd_sweep(args, rep):
    if args.config is None:
        raise ConfigError("sweep needs --config")
    section = _load(args, "sweep")
    base = parse_sim_config(section.child("simulation"), seed_override=args.seed)
    parameter = section.text("parameter", required=True)
    values = section.number_list("values", required=True)
    if not values:
        raise section.error("need at least one value", "values")
    opts = _identify_options(section.child("identify"), args)
    section.finish()

    base_dict = dump_sim_config(base)
    header = ["value"]
    for name in SYSTEMS:
        header += [f"{name}_{k}" for k in ("gain", "natural_frequency", "damping_ratio",
                                           "percent_fit", "fpe", "mse", "error")]
    rows = []
    for value in values:
        tree = dump_sim_config(base)
        _set_path(tree, parameter, value, section)
        config = parse_sim_config(Section(tree, ("simulation",)))
        log = run_simulation(config)
        row = [value]
        for name, result in _identify_all(log, list(SYSTEMS), opts, rep).items():
            if isinstance(result, Exception):
                row += ["", "", "", "", "", "", type(result).__name__]
            else:
                m, r = result
                row += [m.gain, m.natural_frequency, m.damping_ratio, r.percent_fit, r.fpe, r.mse, ""]
        rows.append(row)
        rep.info(f"{parameter}={value!r}: done")

    out = _out_dir(args)
    (out / "sweep.csv").write_text(_csv_text(header, rows), encoding="utf-8")
    resolved = {"simulation": base_dict, "parameter": parameter, "values": values, "identify": opts}
    _write_manifest(out, "sweep", args, resolved, int(base.rng_seed))
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="telesim", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"telesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="YAML config or a manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--quiet", action="store_true")
        return p

    common(sub.add_parser("simulate", help="run one simulation and write log.csv"))
    p = common(sub.add_parser("identify", help="fit participant/environment models to a log"))
    p.add_argument("log", nargs="?", help="log CSV written by 'simulate'")
    p.add_argument("--system", choices=["participant", "environment", "both"])
    p.add_argument("--prediction", choices=["one_step", "simulation"])
    p = common(sub.add_parser("figures", help="step-response and Bode plots"))
    p.add_argument("inputs", nargs="*", help="one log CSV, or model files from 'identify'")
    p.add_argument("--prediction", choices=["one_step", "simulation"])
    common(sub.add_parser("psych", help="run a psychophysics session"))
    common(sub.add_parser("sweep", help="identify models across a parameter sweep"))
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "figures": cmd_figures,
    "psych": cmd_psych,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    rep = _Reporter(args.quiet)
    try:
        return COMMANDS[args.command](args, rep)
    except (ConfigError, LogSchemaError) as exc:
        rep.error(str(exc))
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        rep.error(str(exc))
        return EXIT_NUMERIC
    except TelesimError as exc:
        rep.error(f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
