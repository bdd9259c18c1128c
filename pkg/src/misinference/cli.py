"""Command-line entry point.

Exit codes: 0 success, 1 computation failure, 2 usage error (including an
unwritable output location). The default output directory comes from
``MISINFERENCE_OUT`` and falls back to the working directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__
from .core import MisinferenceError
from .demand import DemandProblem, belief_map_for, net_values, optimal_purchase, purchase_boundaries
from .design import gen_sessions
from .estimation import compare_models, fit_linear, fit_power, records_to_frame
from .figures import all_figures, write_figures
from .perception import (
    REFERENCE_KBETA,
    KBeta,
    misperceived_posterior,
    switching_point,
    uncertain_combined,
    uncertain_separate,
    weight,
)
from .records import SCHEMA_VERSION, dumps_csv, dumps_json, read_records
from .simulation import PanelConfig, group_by_subject, panel_profiles, run_panel

ENV_OUT = "MISINFERENCE_OUT"
PROFILE_COLUMNS = ("subject_id", "sophistication", "learning_rate", "report_noise_sd", "eta")
PIPELINE_FILES = ("designs.csv", "records.csv", "subjects.csv", "fit.json")
REQUIRED_CONFIG = {"seed", "n_subjects", "panel", "fit", "figures"}

log = logging.getLogger("misinference")


class UsageError(Exception):
    """Bad arguments or an unusable output location (exit 2)."""


def default_out_dir() -> Path:
    return Path(os.environ.get(ENV_OUT, "."))


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write_text(path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e}") from e


def _emit(text: str, out) -> None:
    if out:
        _write_text(out, text)
    else:
        sys.stdout.write(text)


def _emit_records(records, out) -> None:
    """CSV by default; JSON when the output file ends in .json."""
    records = list(records)
    _emit(dumps_json(records) if out and Path(out).suffix == ".json" else dumps_csv(records), out)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _load_records(path):
    try:
        return read_records(path)
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _kbeta(args) -> KBeta:
    try:
        return KBeta(args.k, args.beta)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


# --------------------------------------------------------------------------
# building blocks shared by the subcommands and the pipeline

def profiles_csv(profiles) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for sid, p in profiles.items():
        eta = p.params.eta if p.params is not None else 0.0
        w.writerow([sid, repr(p.sophistication), repr(p.learning_rate), repr(p.report_noise_sd), repr(eta)])
    return buf.getvalue()


def read_sophistication(path) -> dict[str, float]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return {row["subject_id"]: float(row["sophistication"]) for row in csv.DictReader(fh)}
    except (OSError, KeyError, ValueError) as e:
        raise UsageError(f"cannot read subject profiles from {path}: {e}") from e


def panel_config(data: dict | None, n_subjects: int | None = None, seed: int | None = None) -> PanelConfig:
    data = dict(data or {})
    if n_subjects is not None:
        data["n_subjects"] = n_subjects
    if seed is not None:
        data["seed"] = seed
    try:
        return PanelConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid panel config: {e}") from e


def simulate(config: PanelConfig, designs):
    profiles = panel_profiles(config, group_by_subject(designs))
    return run_panel(config, designs, profiles), profiles


def fit_document(records, model: str, bootstrap: int, binned: bool, seed: int) -> dict:
    frame = records_to_frame(records)
    if model == "power":
        return fit_power(frame, binned=binned, bootstrap=bootstrap, seed=seed).to_dict()
    if model == "linear":
        c, rss = fit_linear(frame)
        return {"model": "Linear", "weight": c, "rss": rss, "n_trials": int(len(frame))}
    cmp = compare_models(frame)
    cmp["power"] = cmp["power"].to_dict()
    return cmp


# --------------------------------------------------------------------------
# subcommands

def cmd_design_gen(args) -> int:
    sessions = gen_sessions(args.subjects, args.seed, exact_quota=args.exact_quota)
    _emit_records((r for s in sessions for r in s.records()), args.out)
    return 0


def cmd_simulate(args) -> int:
    designs = _load_records(args.designs)
    data = _read_json(args.config) if args.config else {}
    n = data.get("n_subjects", len(group_by_subject(designs)))
    config = panel_config(data, n_subjects=n, seed=args.seed)
    records, profiles = simulate(config, designs)
    _emit_records(records, args.out)
    if args.subjects_out:
        _write_text(args.subjects_out, profiles_csv(profiles))
    return 0


def cmd_fit(args) -> int:
    doc = fit_document(_load_records(args.records), args.model, args.bootstrap, args.binned, args.seed)
    _emit(_dump_json(doc), args.out)
    return 0


def cmd_demand_solve(args) -> int:
    try:
        prob = DemandProblem(args.p, scale=args.scale)
    except ValueError as e:
        raise UsageError(str(e)) from e
    bmap = belief_map_for(_kbeta(args)) if args.k is not None else None
    vals = net_values(prob, bmap, args.curiosity)
    doc = {"p": args.p, "scale": args.scale, "net_values": vals,
           "optimal": optimal_purchase(prob, bmap, args.curiosity)}
    _emit(_dump_json(doc), args.out)
    return 0


def cmd_demand_boundaries(args) -> int:
    bmap = belief_map_for(_kbeta(args)) if args.k is not None else None
    b = purchase_boundaries(scale=args.scale, belief_map=bmap)
    _emit(_dump_json({"scale": args.scale, "boundaries": list(b)}), args.out)
    return 0


def predict(p: float | None, kb: KBeta, uncertain: tuple[float, float] | None = None) -> dict:
    doc: dict = {"k": kb.k, "beta": kb.beta, "switching_point": switching_point(kb)}
    if p is not None:
        if not 0.0 < p < 1.0:
            raise UsageError("--p must lie strictly between 0 and 1")
        doc["bayes_posterior"] = p
        if p == 0.5:
            doc["posterior"] = 0.5
            doc["weight"] = None
            doc["uninformative"] = True
        else:
            doc["posterior"] = misperceived_posterior(p, kb)
            doc["weight"] = weight(p, kb)
            doc["uninformative"] = False
    if uncertain is not None:
        lo, hi = uncertain
        if not (0 < lo < 1 and 0 < hi < 1):
            raise UsageError("--uncertain shares must lie strictly between 0 and 1")
        doc["uncertain"] = {"p_low": lo, "p_high": hi, "bayes": 0.5 * (lo + hi),
                            "combined": uncertain_combined(lo, hi, kb),
                            "separate": uncertain_separate(lo, hi, kb)}
    return doc


def cmd_predict(args) -> int:
    if args.p is None and args.uncertain is None:
        raise UsageError("predict needs --p and/or --uncertain")
    _emit(_dump_json(predict(args.p, _kbeta(args), args.uncertain)), args.out)
    return 0


def cmd_figures(args) -> int:
    records = _load_records(args.records)
    soph = read_sophistication(args.subjects) if args.subjects else None
    out_dir = Path(args.out_dir) if args.out_dir else default_out_dir()
    _ensure_dir(out_dir)
    write_figures(all_figures(records, soph, args.bootstrap, args.seed), out_dir)
    return 0


# --------------------------------------------------------------------------
# pipeline

def _ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"output directory {path} is not usable: {e}") from e
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_config(args) -> dict:
    """Collect every setting the pipeline depends on into one JSON-able document."""
    if args.manifest:
        m = _read_json(args.manifest)
        if m.get("schema_version") != SCHEMA_VERSION:
            raise UsageError(f"unsupported manifest schema {m.get('schema_version')!r}")
        config = m.get("config")
        if not isinstance(config, dict) or not REQUIRED_CONFIG <= config.keys():
            raise UsageError(f"manifest {args.manifest} has no complete run config")
        return config
    data = _read_json(args.config) if args.config else {}
    panel = panel_config(data, n_subjects=args.subjects if args.subjects is not None
                         else data.get("n_subjects", 500), seed=args.seed)
    panel.scale = args.scale
    return {"seed": panel.seed, "n_subjects": panel.n_subjects, "scale": panel.scale,
            "panel": panel.to_dict(), "exact_quota": args.exact_quota,
            "fit": {"model": args.model, "bootstrap": args.bootstrap, "binned": args.binned},
            "figures": {"bootstrap": args.figure_bootstrap}}


def run_pipeline(config: dict, out_dir: Path) -> dict:
    """Run every stage into a staging directory, then move the results into ``out_dir``.

    On failure nothing is left in ``out_dir``. Returns the manifest.
    """
    _ensure_dir(out_dir)
    try:
        stage = Path(tempfile.mkdtemp(prefix=".pipeline-", dir=out_dir))
    except OSError as e:
        raise UsageError(f"output directory {out_dir} is not writable: {e}") from e
    current = "design"
    try:
        seed = config["seed"]
        sessions = gen_sessions(config["n_subjects"], seed, exact_quota=config.get("exact_quota", False))
        designs = [r for s in sessions for r in s.records()]
        (stage / "designs.csv").write_text(dumps_csv(designs), encoding="utf-8")
        current = "simulate"
        panel = panel_config(config["panel"])
        records, profiles = simulate(panel, designs)
        (stage / "records.csv").write_text(dumps_csv(records), encoding="utf-8")
        (stage / "subjects.csv").write_text(profiles_csv(profiles), encoding="utf-8")
        current = "fit"
        f = config["fit"]
        doc = fit_document(records, f["model"], f["bootstrap"], f["binned"], seed)
        (stage / "fit.json").write_text(_dump_json(doc), encoding="utf-8")
        current = "figures"
        soph = {sid: p.sophistication for sid, p in profiles.items()}
        names = [p.name for p in write_figures(all_figures(records, soph, config["figures"]["bootstrap"], seed),
                                               stage)]
        files = sorted(PIPELINE_FILES + tuple(names))
        manifest = {"schema_version": SCHEMA_VERSION, "version": __version__, "seed": seed,
                    "config": config, "artifacts": {n: _sha256(stage / n) for n in files}}
        (stage / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
        for n in files + ["manifest.json"]:
            os.replace(stage / n, out_dir / n)
        return manifest
    except (MisinferenceError, ValueError, ArithmeticError) as e:
        raise StageFailed(current, e) from e
    finally:
        shutil.rmtree(stage, ignore_errors=True)


class StageFailed(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def cmd_pipeline(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else default_out_dir()
    manifest = run_pipeline(run_config(args), out_dir)
    log.info("pipeline wrote %d artifacts to %s", len(manifest["artifacts"]) + 1, out_dir)
    return 0


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    def common_parser(seed_default, seed_help):
        p = argparse.ArgumentParser(add_help=False)
        p.add_argument("--seed", type=int, default=seed_default, help=seed_help)
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    # each subcommand gets its own --seed action; sharing one would let a
    # per-subcommand default leak into the others
    common = common_parser(0, "root seed (default 0)")
    sim_common = common_parser(None, "root seed (default: the config's seed, else 0)")

    kb = argparse.ArgumentParser(add_help=False)
    kb.add_argument("--k", type=float, default=None, help="misperception level k")
    kb.add_argument("--beta", type=float, default=None, help="misperception curvature beta")

    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--out", help="output file (default: standard output)")

    parser = argparse.ArgumentParser(prog="misinference",
                                     description="Simulate and estimate misperception of signal strength.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    design = sub.add_parser("design", help="experiment designs")
    dsub = design.add_subparsers(dest="action", required=True)
    gen = dsub.add_parser("gen", parents=[common, out], help="generate per-subject session designs")
    gen.add_argument("--subjects", type=int, required=True, help="number of subjects")
    gen.add_argument("--exact-quota", action="store_true",
                     help="exactly 8 symmetric and 4 asymmetric one-signal rounds per subject")
    gen.set_defaults(func=cmd_design_gen)

    sim = sub.add_parser("simulate", parents=[sim_common, out], help="fill designs with simulated responses")
    sim.add_argument("--designs", required=True, help="design records (CSV or JSON)")
    sim.add_argument("--config", help="panel config JSON (PanelConfig fields)")
    sim.add_argument("--subjects-out", help="also write per-subject profiles to this CSV")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", parents=[common, out], help="fit the weighting function")
    fit.add_argument("--records", required=True, help="response records (CSV or JSON)")
    fit.add_argument("--model", choices=("power", "linear", "compare"), default="power")
    fit.add_argument("--bootstrap", type=int, default=0,
                     help="cluster-bootstrap replicates for SEs (0 = sandwich SEs; otherwise >= 200)")
    fit.add_argument("--binned", action="store_true", help="fit per-bin mean weights")
    fit.set_defaults(func=cmd_fit)

    demand = sub.add_parser("demand", help="demand for information")
    msub = demand.add_subparsers(dest="action", required=True)
    solve = msub.add_parser("solve", parents=[common, kb, out], help="net values and optimal purchase")
    solve.add_argument("--p", type=float, required=True, help="signal share, 0.5 < p < 0.75")
    solve.add_argument("--scale", type=float, default=100.0, help="dollar value of one utility unit")
    solve.add_argument("--curiosity", type=float, default=0.0, help="dollars of curiosity per card")
    solve.set_defaults(func=cmd_demand_solve)
    bounds = msub.add_parser("boundaries", parents=[common, kb, out], help="shares where demand steps up")
    bounds.add_argument("--scale", type=float, default=100.0, help="dollar value of one utility unit")
    bounds.set_defaults(func=cmd_demand_boundaries)

    pred = sub.add_parser("predict", parents=[common, out], help="model predictions for a scenario")
    pred.add_argument("--p", type=float, help="Bayesian posterior of a symmetric signal")
    pred.add_argument("--k", type=float, default=REFERENCE_KBETA.k, help="misperception level k")
    pred.add_argument("--beta", type=float, default=REFERENCE_KBETA.beta, help="misperception curvature beta")
    pred.add_argument("--uncertain", type=_pair, help="uncertain signal shares 'pL,pH'")
    pred.set_defaults(func=cmd_predict)

    figs = sub.add_parser("figures", parents=[common], help="export figure data tables")
    figs.add_argument("--records", required=True, help="response records (CSV or JSON)")
    figs.add_argument("--subjects", help="subject profile CSV (enables the sophistication split)")
    figs.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates for CIs")
    figs.add_argument("--out-dir", help=f"output directory (default ${ENV_OUT} or .)")
    figs.set_defaults(func=cmd_figures)

    pipe = sub.add_parser("pipeline", parents=[common], help="design, simulate, fit and export in one run")
    pipe.add_argument("--subjects", type=int, default=None, help="panel size (default 500)")
    pipe.add_argument("--config", help="panel config JSON")
    pipe.add_argument("--manifest", help="re-run exactly from a previous manifest.json")
    pipe.add_argument("--scale", type=float, default=100.0, help="dollar value of one utility unit")
    pipe.add_argument("--exact-quota", action="store_true", help="fixed 8/4 one-signal quota")
    pipe.add_argument("--model", choices=("power", "linear", "compare"), default="power")
    pipe.add_argument("--bootstrap", type=int, default=0, help="fit bootstrap replicates")
    pipe.add_argument("--binned", action="store_true", help="fit per-bin mean weights")
    pipe.add_argument("--figure-bootstrap", type=int, default=1000, help="figure CI replicates")
    pipe.add_argument("--out-dir", help=f"output directory (default ${ENV_OUT} or .)")
    pipe.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "k", None) is not None and getattr(args, "beta", None) is None \
            or getattr(args, "beta", None) is not None and getattr(args, "k", None) is None:
        parser.error("--k and --beta go together")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except StageFailed as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MisinferenceError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
