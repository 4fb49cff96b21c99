"""Command-line surface binding the pipeline together.

Subcommands: simulate, reconstruct, estimate, validate, mc-study, mcmc, r0.
Runs are configured by a JSON file whose top level carries the model
parameter fields verbatim plus one block per subcommand; every stochastic
subcommand requires an explicit --seed so artifacts are bit-reproducible.
Each error class maps to its own exit code (see EXIT_CODES).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path as FilePath

from . import bayes, diagnostics, errors, estimate, model, reconstruct, simulate

EXIT_CODES = {
    errors.ConfigError: 2,
    errors.ParseError: 3,
    errors.NegativeCountError: 4,
    errors.EmptySeriesError: 5,
    errors.EmptyInputError: 6,
    errors.LengthMismatchError: 7,
    errors.SimplexError: 8,
    errors.DomainError: 9,
    errors.PositivityError: 10,
    errors.ZeroSigmaError: 11,
    errors.DegenerateDenominatorError: 12,
    errors.SingularSystemError: 13,
    errors.MissingIncrementsError: 14,
    errors.TooFewPointsError: 15,
    errors.DegenerateSampleError: 16,
    errors.WindowViolatedError: 17,
    errors.ReplicateError: 18,
}

_PARAM_FIELDS = ("mu", "beta_s", "beta_a", "kappa", "p", "theta",
                 "alpha_a", "alpha_s", "gamma", "sigma")

_STOCHASTIC = {"simulate", "reconstruct", "mc-study", "mcmc"}


def load_incidence(path, population_n: int) -> reconstruct.IncidenceSeries:
    """Read a date,count CSV into an incidence series."""
    dates, counts = [], []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise errors.ParseError("empty file", line=1) from None
        if [h.strip() for h in header] != ["date", "count"]:
            raise errors.ParseError(f"expected header date,count, got "
                                    f"{header!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise errors.ParseError("expected two fields", line=lineno)
            raw = row[1].strip()
            try:
                count = int(raw)
            except ValueError:
                raise errors.ParseError(f"count {raw!r} is not an integer",
                                        line=lineno) from None
            if count < 0:
                raise errors.NegativeCountError(
                    f"line {lineno}: negative count {count}")
            dates.append(row[0].strip())
            counts.append(count)
    if not counts:
        raise errors.ParseError("no records")
    return reconstruct.IncidenceSeries(tuple(dates), tuple(counts),
                                       population_n)


def _load_config(path) -> dict:
    if path is None:
        raise errors.ConfigError("this subcommand needs --config")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise errors.ConfigError(f"config file {path!r} not found") from None
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise errors.ConfigError("config must be a JSON object")
    return cfg


def _params_from_config(cfg: dict) -> model.ModelParams:
    missing = [f for f in _PARAM_FIELDS if f not in cfg]
    if missing:
        raise errors.ConfigError(f"missing parameter fields: {missing}")
    try:
        return model.ModelParams(**{f: float(cfg[f]) for f in _PARAM_FIELDS})
    except (TypeError, ValueError) as exc:
        raise errors.ConfigError(f"bad parameter value: {exc}") from None


def _state_from_config(block, default: model.StateVec) -> model.StateVec:
    if block is None:
        return default
    try:
        return model.StateVec(s=float(block["s"]), e=float(block["e"]),
                              i_a=float(block["i_a"]), i_s=float(block["i_s"]),
                              r=float(block["r"]))
    except KeyError as exc:
        raise errors.ConfigError(f"init block missing {exc}") from None


def _block(cfg: dict, name: str) -> dict:
    block = cfg.get(name)
    if block is None:
        raise errors.ConfigError(f"config has no {name!r} block")
    if not isinstance(block, dict):
        raise errors.ConfigError(f"{name!r} block must be a JSON object")
    return block


def _need_seed(args):
    if args.seed is None:
        raise errors.ConfigError(
            f"--seed is required for the {args.command} subcommand")
    return args.seed


def _outdir(args) -> FilePath:
    out = FilePath(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_r0(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    value = model.r0(params, convention=args.r0_convention)
    print(f"{value:#.6g}")
    return 0


def _cmd_simulate(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    block = _block(cfg, "simulate")
    init = _state_from_config(block.get("init"), model.BASELINE_INIT)
    sim_cfg = simulate.SimConfig(
        params=params, init=init,
        dt=float(block.get("dt", 1e-3)),
        n_steps=int(block["n_steps"]),
        scheme=block.get("scheme", simulate.SCHEME_EULER),
        seed=_need_seed(args),
        positivity=block.get("positivity", simulate.POSITIVITY_REJECT))
    path = simulate.simulate_path(sim_cfg)
    target = _outdir(args) / block.get("output", "path.csv")
    simulate.path_to_csv(path, str(target))
    print(f"wrote {target}")
    return 0


def _reconstruct_config(cfg, block, seed, pedantic) -> reconstruct.ReconstructConfig:
    params = _params_from_config(cfg)
    n_pop = block.get("population_n")
    return reconstruct.ReconstructConfig(
        params=params,
        init_e=float(block.get("init_e", model.BASELINE_INIT.e)),
        init_ia=float(block.get("init_ia", model.BASELINE_INIT.i_a)),
        init_r=float(block.get("init_r", model.BASELINE_INIT.r)),
        dt=float(block.get("dt", 1e-3)),
        seed=seed,
        pedantic_paper=pedantic,
        resample_initials=bool(block.get("resample_initials", False)),
        population_n=None if n_pop is None else int(n_pop))


def _load_obs(block):
    if "incidence" not in block or "population_n" not in block:
        raise errors.ConfigError("block needs incidence and population_n")
    series = load_incidence(block["incidence"], int(block["population_n"]))
    return reconstruct.normalize(series)


def _cmd_reconstruct(args):
    cfg = _load_config(args.config)
    block = _block(cfg, "reconstruct")
    seed = _need_seed(args)
    rec_cfg = _reconstruct_config(cfg, block, seed, args.pedantic_paper)
    obs = _load_obs(block)
    n_rep = int(block.get("n_rep", 1))
    paths = reconstruct.replicate_reconstructions(obs, rec_cfg, n_rep)
    out = _outdir(args)
    files = []
    for i, p in enumerate(paths):
        name = f"reconstruction_{i:04d}.csv"
        simulate.path_to_csv(p, str(out / name))
        files.append(name)
    manifest = {"n_rep": n_rep, "seed": seed,
                "rng_algorithm": simulate.RNG_ALGORITHM,
                "pedantic_paper": args.pedantic_paper, "files": files}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    print(f"wrote {n_rep} reconstruction(s) and manifest to {out}")
    return 0


def _cmd_estimate(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    block = _block(cfg, "estimate")
    sigma = block.get("known_sigma")
    sigma = None if sigma is None else float(sigma)
    restrict = bool(block.get("restrict_to_window", False))
    if "path_csv" in block:
        path = simulate.path_from_csv(block["path_csv"],
                                      require_simplex=False)
        report = estimate.estimate_path(path, params, sigma=sigma,
                                        restrict_to_window=restrict)
    else:
        seed = _need_seed(args)
        rec_cfg = _reconstruct_config(cfg, block, seed, args.pedantic_paper)
        obs = _load_obs(block)
        report = estimate.replicate_estimates(obs, rec_cfg,
                                              int(block.get("n_rep", 2)),
                                              sigma=sigma)
    target = _outdir(args) / block.get("output", "estimate.json")
    with open(target, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(f"wrote {target}")
    return 0


def _cmd_validate(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    block = _block(cfg, "validate")
    if "path_csv" not in block:
        raise errors.ConfigError("validate block needs path_csv")
    path = simulate.path_from_csv(block["path_csv"], require_simplex=False)
    res = diagnostics.residual_increments(path, params,
                                          method=block.get("method", "em"))
    verdict = diagnostics.normality_test(res.standardized,
                                         alpha=float(block.get("alpha", 0.01)))
    out = _outdir(args)
    with open(out / "residuals.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "raw", "standardized"])
        times = path.times
        for k in range(len(res)):
            writer.writerow([f"{times[k + 1]:.17g}", f"{res.raw[k]:.17g}",
                             f"{res.standardized[k]:.17g}"])
    diagnostics.qq_to_csv(diagnostics.qq_points(res.standardized),
                          str(out / "qq.csv"))
    with open(out / "normality.json", "w") as fh:
        json.dump(verdict.to_json_dict(), fh, indent=2)
        fh.write("\n")
    print(f"wrote residuals.csv, qq.csv, normality.json to {out}; "
          f"normality pass = {verdict.passed}")
    return 0


def _cmd_mc_study(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    block = _block(cfg, "mc_study")
    init = _state_from_config(block.get("init"), model.BASELINE_INIT)
    sigma = block.get("known_sigma")
    rows = diagnostics.consistency_study(
        params, init, [float(t) for t in block["horizons"]],
        n_rep=int(block.get("n_rep", 200)),
        dt=float(block.get("dt", 1e-3)),
        seed=_need_seed(args),
        sigma=None if sigma is None else float(sigma))
    target = _outdir(args) / block.get("output", "consistency.csv")
    diagnostics.consistency_to_csv(rows, str(target))
    print(f"wrote {target}")
    return 0


def _cmd_mcmc(args):
    cfg = _load_config(args.config)
    params = _params_from_config(cfg)
    block = _block(cfg, "mcmc")
    series = None
    if "incidence" in block:
        series = load_incidence(block["incidence"],
                                int(block["population_n"]))
    priors_block = block.get("priors", {})
    priors = bayes.PriorSpec(
        p_lo=float(priors_block.get("p_lo", 0.3)),
        p_hi=float(priors_block.get("p_hi", 0.8)),
        kappa_shape=float(priors_block.get("kappa_shape", 10.0)),
        kappa_rate=float(priors_block.get("kappa_rate", 50.0)))
    init = _state_from_config(block.get("init"), model.BASELINE_INIT)
    mcfg = bayes.McmcConfig(
        iterations=int(block["iterations"]),
        burn_in=int(block.get("burn_in", 0)),
        proposal_sd=tuple(float(s) for s in block.get("proposal_sd",
                                                      (0.02, 0.01))),
        seed=_need_seed(args),
        ode_dt=float(block.get("ode_dt", 1.0)))
    result = bayes.metropolis(series, priors, params, init, mcfg)
    target = _outdir(args) / block.get("output", "samples.csv")
    bayes.samples_to_csv(result, str(target))
    print(f"wrote {target}; acceptance rate = {result.acceptance_rate:.3f}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "estimate": _cmd_estimate,
    "validate": _cmd_validate,
    "mc-study": _cmd_mc_study,
    "mcmc": _cmd_mcmc,
    "r0": _cmd_r0,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seirsde",
        description="Stochastic SEIR simulation and inference pipeline")
    parser.add_argument("command", choices=sorted(_COMMANDS),
                        help="pipeline stage to run")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed; mandatory for stochastic commands")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--pedantic-paper", action="store_true",
                        help="reproduce the published reconstruction "
                             "recurrence verbatim, typos included")
    parser.add_argument("--r0-convention", choices=("paper", "consistent"),
                        default="paper",
                        help="pairing of the branch proportions in R0")
    return parser


def run(args) -> int:
    """Dispatch one parsed invocation; returns the process exit status."""
    try:
        return _COMMANDS[args.command](args)
    except errors.SeirSdeError as exc:
        code = next((c for cls, c in EXIT_CODES.items()
                     if isinstance(exc, cls)), 1)
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return code
    except (ValueError, OSError) as exc:
        # bad values rejected by the domain types, unreadable files
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_CODES[errors.ConfigError]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
