"""Command-line entry point orchestrating the full workflow.

One subcommand per process. Every subcommand resolves the configuration
(defaults, then the YAML file from --config or $SOCNAV_CONFIG), validates the
inputs it needs, and embeds the resolved config hash in its outputs. Report
commands emit both a delimited table and a rendered figure next to it.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 internal
assertion failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .demos import (
    generate_boarding_demos,
    generate_corridor_demos,
    load_bundled_demos,
    write_demo_dir,
)
from .persistence import (
    ParseError,
    config_hash,
    extract_demos,
    load_config,
    load_episode_dir,
)
from .reward import (
    KernelParams,
    eval_reward_grid,
    fit_reward_model,
    load_reward_model,
    save_reward_model,
    write_reward_grid,
)
from .scenario import (
    VARIANTS,
    EpisodeConfig,
    MetricsReport,
    build_scenario,
    evaluate,
    run_episode,
)
from .social_force import SfmParams
from .student import (
    DaggerSchedule,
    MdnArchitecture,
    MdnPolicy,
    StudentController,
    TrainConfig,
    load_checkpoint,
    run_dagger,
    safe_risky_analysis,
    save_checkpoint,
)
from .teacher import RolloutConfig, TeacherPolicy
from .world import LidarConfig, VelocityCommand

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

CONFIG_ENV = "SOCNAV_CONFIG"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _episode_config(config: dict) -> EpisodeConfig:
    return EpisodeConfig(**config["episode"])


def _sfm(config: dict) -> SfmParams:
    return SfmParams(**config["sfm"])


def _lidar(config: dict) -> LidarConfig:
    return LidarConfig(**config["lidar"])


def _rollout_config(config: dict) -> RolloutConfig:
    t = config["teacher"]
    return RolloutConfig(
        horizon=t["horizon"], dt=t["dt"], human_prediction=t["human_prediction"]
    )


def _kernel_params(config: dict) -> KernelParams:
    r = config["reward"]
    return KernelParams(
        output_scale=r["output_scale"],
        length_scale_sq=r["length_scale_sq"],
        lam=r["lam"],
        beta=r["beta"],
    )


def _arch(config: dict) -> MdnArchitecture:
    s = config["student"]
    return MdnArchitecture(
        hidden=s["hidden"], components=s["components"], dropout=s["dropout"]
    )


def _make_teacher(config: dict, reward_model, density_on=True, goal_on=True, obstacle_on=True):
    t = config["teacher"]
    return TeacherPolicy(
        reward_model=reward_model,
        rollout_config=_rollout_config(config),
        lidar=_lidar(config),
        ema=t["ema"],
        density_on=t["density_on"] and density_on,
        goal_on=t["goal_on"] and goal_on,
        obstacle_on=t["obstacle_on"] and obstacle_on,
        sfm=_sfm(config),
    )


class StopPolicy:
    """Stands still forever; the degenerate baseline for harness checks."""

    def reset(self):
        pass

    def act(self, obs_vector, world):
        return VelocityCommand(0.0, 0.0)


def _make_policy(args, config: dict):
    if args.policy == "stop":
        return StopPolicy()
    if args.policy == "student":
        if not args.checkpoint:
            raise ValueError("--checkpoint is required for --policy student")
        return StudentController(load_checkpoint(args.checkpoint))
    model = load_reward_model(args.model) if getattr(args, "model", None) else None
    if args.policy == "teacher" and model is None:
        raise ValueError("--model is required for --policy teacher (use teacher-rules to run without one)")
    return _make_teacher(config, model)


def _load_demo_records(args):
    if getattr(args, "demos", None):
        records = load_episode_dir(args.demos)
        if not records:
            raise ValueError(f"no episode files under {args.demos}")
        return records
    return load_bundled_demos(args.corpus)


def _extract_split_strides(records, space: str, positive_stride: int, negative_stride: int):
    """Demonstration matrix with independent positive/negative strides,
    positives first (generation order preserved within each class)."""
    pos = [r for r in records if r.label == 1]
    neg = [r for r in records if r.label == -1]
    parts_x, parts_g = [], []
    if pos:
        ds = extract_demos(pos, space=space, stride=positive_stride)
        parts_x.append(ds.x)
        parts_g.append(ds.gamma)
    if neg:
        ds = extract_demos(neg, space=space, stride=negative_stride)
        parts_x.append(ds.x)
        parts_g.append(ds.gamma)
    if not parts_x:
        raise ValueError("no labeled demonstrations to fit on")
    return np.vstack(parts_x), np.concatenate(parts_g)


def _write_table(path, header_lines: list[str], columns: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def _figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


def _new_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _report_rows(report: MetricsReport) -> list[list]:
    rows = [
        [report.variant, s["seed"], f"{s['sr']:.1f}", f"{s['tt']:.2f}", f"{s['pl']:.2f}"]
        for s in report.per_seed
    ]
    rows.append(
        [
            report.variant,
            "all",
            f"{report.success_rate:.1f}",
            f"{report.mean_time:.2f}",
            f"{report.mean_path_length:.2f}",
        ]
    )
    return rows


def cmd_fit_reward(args, config, cfg_hash) -> int:
    records = _load_demo_records(args)
    x, gamma = _extract_split_strides(
        records, args.space, args.positive_stride, args.negative_stride
    )
    params = _kernel_params(config)
    if args.length_scale_sq is not None:
        params = KernelParams(
            output_scale=params.output_scale,
            length_scale_sq=args.length_scale_sq,
            lam=params.lam,
            beta=params.beta,
        )
    model = fit_reward_model(
        x,
        gamma,
        params,
        n_inducing=args.n_inducing or config["reward"]["n_inducing"],
        seed=args.seed,
    )
    save_reward_model(model, args.out)
    print(
        f"fit-reward config={cfg_hash} samples={x.shape[0]} dim={x.shape[1]} "
        f"inducing={model.inducing_x.shape[0]} length_scale_sq={model.length_scale_sq:.6g} "
        f"-> {args.out}"
    )
    return EXIT_OK


def cmd_export_reward_map(args, config, cfg_hash) -> int:
    model = load_reward_model(args.model)
    fixed = np.asarray(args.fixed, float) if args.fixed else None
    grid = eval_reward_grid(
        model, tuple(args.bounds), args.resolution, fixed=fixed, query_gamma=args.gamma
    )
    write_reward_grid(grid, args.out)

    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(
        grid.values,
        origin="lower",
        extent=(grid.x_min, grid.x_max, grid.y_min, grid.y_max),
        cmap="viridis",
        aspect="equal",
    )
    fig.colorbar(im, ax=ax, label="reward")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"reward map (config {cfg_hash})")
    fig.tight_layout()
    fig.savefig(_figure_path(args.out), dpi=120)
    plt.close(fig)
    print(f"export-reward-map config={cfg_hash} -> {args.out}, {_figure_path(args.out)}")
    return EXIT_OK


def cmd_run_teacher(args, config, cfg_hash) -> int:
    model = load_reward_model(args.model) if args.model else None
    teacher = _make_teacher(config, model)
    scenario = build_scenario(args.variant, args.seed)
    record, result = run_episode(
        teacher,
        scenario,
        _episode_config(config),
        _sfm(config),
        _lidar(config),
        source="teacher",
        config_hash=cfg_hash,
    )
    if args.out:
        from .persistence import write_episode

        write_episode(record, args.out)
    print(
        f"run-teacher config={cfg_hash} variant={args.variant} seed={args.seed} "
        f"termination={result.termination} tt={result.total_time:.2f} "
        f"pl={result.path_length:.2f}"
    )
    return EXIT_OK


def _evaluate_variants(args, config, policy_factory):
    reports = []
    for variant in args.variants:
        report = evaluate(
            policy_factory(),
            variant,
            n_seeds=args.n_seeds,
            n_trials=args.n_trials,
            config=_episode_config(config),
            sfm=_sfm(config),
            lidar=_lidar(config),
            workers=args.workers,
        )
        reports.append(report)
    return reports


def cmd_evaluate(args, config, cfg_hash) -> int:
    reports = _evaluate_variants(args, config, lambda: _make_policy(args, config))
    columns = ["variant", "seed", "sr_pct", "tt_s", "pl_m"]
    rows = [row for report in reports for row in _report_rows(report)]
    header = [
        f"socnav evaluate config={cfg_hash} policy={args.policy} "
        f"n_seeds={args.n_seeds} n_trials={args.n_trials}"
    ]
    _write_table(args.out, header, columns, rows)

    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(6, 3.6))
    width = 0.8 / max(len(reports), 1)
    for i, report in enumerate(reports):
        seeds = [s["seed"] for s in report.per_seed]
        srs = [s["sr"] for s in report.per_seed]
        ax.bar([s + i * width for s in seeds], srs, width=width, label=report.variant)
    ax.set_xlabel("seed")
    ax.set_ylabel("SR [%]")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.set_title(f"success rate per seed (config {cfg_hash})")
    fig.tight_layout()
    fig.savefig(_figure_path(args.out), dpi=120)
    plt.close(fig)

    for report in reports:
        print(
            f"evaluate {report.variant}: sr={report.success_rate:.1f}% "
            f"tt={report.mean_time:.2f}s pl={report.mean_path_length:.2f}m"
        )
    print(f"-> {args.out}, {_figure_path(args.out)}")
    return EXIT_OK


ABLATION_ROWS = (
    ("full", True, True, True),
    ("no-density", False, True, True),
    ("no-goal", True, False, True),
    ("no-obstacle", True, True, False),
)


def cmd_ablate(args, config, cfg_hash) -> int:
    model = load_reward_model(args.model)
    columns = ["variant", "den", "goal", "obs", "sr_pct", "tt_s", "pl_m"]
    rows = []
    for variant in args.variants:
        for name, den, goal, obs in ABLATION_ROWS:
            report = evaluate(
                _make_teacher(config, model, density_on=den, goal_on=goal, obstacle_on=obs),
                variant,
                n_seeds=args.n_seeds,
                n_trials=args.n_trials,
                config=_episode_config(config),
                sfm=_sfm(config),
                lidar=_lidar(config),
                workers=args.workers,
            )
            rows.append(
                [
                    variant,
                    "x" if den else "-",
                    "x" if goal else "-",
                    "x" if obs else "-",
                    f"{report.success_rate:.1f}",
                    f"{report.mean_time:.2f}",
                    f"{report.mean_path_length:.2f}",
                ]
            )
            print(
                f"ablate {variant} {name}: sr={report.success_rate:.1f}% "
                f"tt={report.mean_time:.2f}s pl={report.mean_path_length:.2f}m"
            )
    header = [
        f"socnav ablate config={cfg_hash} n_seeds={args.n_seeds} n_trials={args.n_trials}",
        "den/goal/obs: x = active, - = removed",
    ]
    _write_table(args.out, header, columns, rows)

    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(7, 3.6))
    labels = [f"{r[0]}\n{r[1]}{r[2]}{r[3]}" for r in rows]
    ax.bar(range(len(rows)), [float(r[4]) for r in rows], color="tab:blue")
    ax.set_xticks(range(len(rows)), labels, fontsize=7)
    ax.set_ylabel("SR [%]")
    ax.set_ylim(0, 105)
    ax.set_title(f"reward-term ablation (config {cfg_hash})")
    fig.tight_layout()
    fig.savefig(_figure_path(args.out), dpi=120)
    plt.close(fig)
    print(f"-> {args.out}, {_figure_path(args.out)}")
    return EXIT_OK


def cmd_distill(args, config, cfg_hash) -> int:
    model = load_reward_model(args.model)
    teacher = _make_teacher(config, model)
    s = config["student"]
    schedule = DaggerSchedule(
        initial_episodes=args.initial_episodes or s["initial_episodes"],
        rounds=args.rounds if args.rounds is not None else s["rounds"],
        episodes_per_round=args.episodes_per_round or s["episodes_per_round"],
    )
    train_config = TrainConfig(
        batch_size=s["batch_size"],
        learning_rate=s["learning_rate"],
        epochs=args.epochs or s["epochs_per_round"],
        seed=args.seed,
    )
    result = run_dagger(
        teacher,
        args.variant,
        schedule=schedule,
        train_config=train_config,
        arch=_arch(config),
        model_kind=args.kind,
        episode_config=_episode_config(config),
        sfm=_sfm(config),
        lidar=_lidar(config),
        progress=lambda rnd, n, loss: print(
            f"distill round {rnd}: dataset={n} final_loss={loss:.4f}"
        ),
    )
    save_checkpoint(
        result.model,
        args.out,
        metadata={
            "config_hash": cfg_hash,
            "variant": args.variant,
            "kind": args.kind,
            "seed": args.seed,
            "round_sizes": result.round_sizes,
        },
    )
    log_path = Path(args.out).with_suffix(".log.tsv")
    _write_table(
        log_path,
        [f"socnav distill config={cfg_hash} variant={args.variant} kind={args.kind}"],
        ["round", "dataset", "final_loss"],
        [[e["round"], e["dataset"], f"{e['final_loss']:.6f}"] for e in result.training_log],
    )

    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(
        [e["round"] for e in result.training_log],
        [e["final_loss"] for e in result.training_log],
        marker="o",
    )
    ax.set_xlabel("DAgger round")
    ax.set_ylabel("final training loss")
    ax.set_title(f"{args.kind} distillation on {args.variant} (config {cfg_hash})")
    fig.tight_layout()
    fig.savefig(_figure_path(args.out), dpi=120)
    plt.close(fig)
    print(f"distill config={cfg_hash} -> {args.out}, {log_path}, {_figure_path(args.out)}")
    return EXIT_OK


def cmd_analyze_uncertainty(args, config, cfg_hash) -> int:
    model = load_checkpoint(args.checkpoint)
    if not isinstance(model, MdnPolicy):
        raise ValueError("uncertainty analysis needs an MDN checkpoint")
    if args.records:
        records = load_episode_dir(args.records)
        if not records:
            raise ValueError(f"no episode files under {args.records}")
    else:
        student = StudentController(model)
        records = []
        for i in range(args.n_episodes):
            scenario = build_scenario(args.variant, 9_000_000 + args.seed * 10_000 + i)
            record, _ = run_episode(
                student,
                scenario,
                _episode_config(config),
                _sfm(config),
                _lidar(config),
                source="student",
                config_hash=cfg_hash,
            )
            records.append(record)
    analysis = safe_risky_analysis(model, records, threshold=args.threshold)
    columns = ["class", "n_frames", "epistemic", "aleatoric"]
    rows = []
    for cls in ("safe", "risky"):
        entry = analysis[cls]
        if entry is None:
            rows.append([cls, 0, "nan", "nan"])
        else:
            rows.append(
                [cls, entry["n_frames"], f"{entry['epistemic']:.8f}", f"{entry['aleatoric']:.8f}"]
            )
    _write_table(
        args.out,
        [f"socnav analyze-uncertainty config={cfg_hash} threshold={args.threshold}"],
        columns,
        rows,
    )

    plt = _new_figure()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    present = [cls for cls in ("safe", "risky") if analysis[cls] is not None]
    x = np.arange(len(present))
    ax.bar(x - 0.18, [analysis[c]["epistemic"] for c in present], width=0.36, label="epistemic")
    ax.bar(x + 0.18, [analysis[c]["aleatoric"] for c in present], width=0.36, label="aleatoric")
    ax.set_xticks(x, present)
    ax.set_ylabel("mean variance")
    ax.legend()
    ax.set_title(f"uncertainty by clearance class (config {cfg_hash})")
    fig.tight_layout()
    fig.savefig(_figure_path(args.out), dpi=120)
    plt.close(fig)
    for row in rows:
        print("analyze-uncertainty " + " ".join(str(v) for v in row))
    print(f"-> {args.out}, {_figure_path(args.out)}")
    return EXIT_OK


def cmd_make_synthetic(args, config, cfg_hash) -> int:
    out = Path(args.out)
    if args.corpus in ("corridor", "both"):
        records = generate_corridor_demos(seed=args.seed, config=_episode_config(config))
        paths = write_demo_dir(records, out / "corridor")
        print(f"make-synthetic config={cfg_hash} corridor: {len(paths)} episodes -> {out / 'corridor'}")
    if args.corpus in ("boarding", "both"):
        records = generate_boarding_demos(config=_episode_config(config))
        paths = write_demo_dir(records, out / "boarding")
        print(f"make-synthetic config={cfg_hash} boarding: {len(paths)} episodes -> {out / 'boarding'}")
    return EXIT_OK


def cmd_serve(args, config, cfg_hash) -> int:
    from .service import serve

    host = args.host or config["service"]["host"]
    port = args.port or config["service"]["port"]
    reward_model = load_reward_model(args.model) if args.model else None
    serve(
        config,
        cfg_hash,
        host=host,
        port=port,
        reward_model=reward_model,
        student_checkpoint=args.checkpoint,
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="socnav", description=__doc__)
    parser.add_argument("--version", action="version", version=f"socnav {__version__}")
    parser.add_argument(
        "--config",
        default=os.environ.get(CONFIG_ENV),
        help=f"YAML config overriding the defaults (or ${CONFIG_ENV})",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit-reward", help="fit a density reward model from demonstrations")
    p.add_argument("--demos", help="directory of labeled episode files")
    p.add_argument(
        "--corpus",
        choices=("boarding", "corridor"),
        default="boarding",
        help="bundled corpus when --demos is not given",
    )
    p.add_argument("--space", choices=("obs-action-31d", "position-2d"), default="obs-action-31d")
    p.add_argument("--positive-stride", type=int, default=2)
    p.add_argument("--negative-stride", type=int, default=1)
    p.add_argument("--n-inducing", type=int, default=None)
    p.add_argument("--length-scale-sq", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_reward)

    p = sub.add_parser("export-reward-map", help="evaluate a fitted model on a 2D grid")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", type=float, nargs=4, default=[0.0, 4.0, 0.0, 4.0],
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--fixed", type=float, nargs="*", default=None,
                   help="values pinning non-grid model dimensions")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_reward_map)

    p = sub.add_parser("run-teacher", help="run one teacher episode")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--model", help="fitted reward model (rule terms only when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="episode file to write")
    p.set_defaults(func=cmd_run_teacher)

    p = sub.add_parser("evaluate", help="SR/TT/PL over seeded trials")
    p.add_argument("--policy", choices=("teacher", "teacher-rules", "student", "stop"),
                   default="teacher")
    p.add_argument("--model", help="fitted reward model for the teacher")
    p.add_argument("--checkpoint", help="student checkpoint for --policy student")
    p.add_argument("--variants", choices=VARIANTS, nargs="+", default=list(VARIANTS))
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--n-trials", type=int, default=100)
    p.add_argument("--workers", type=int, default=os.cpu_count())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="reward-term removal sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--variants", choices=VARIANTS, nargs="+", default=list(VARIANTS))
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--n-trials", type=int, default=100)
    p.add_argument("--workers", type=int, default=os.cpu_count())
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("distill", help="DAgger distillation into a student policy")
    p.add_argument("--model", required=True, help="fitted reward model for the teacher")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--kind", choices=("mdn", "mlp"), default="mdn")
    p.add_argument("--initial-episodes", type=int, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--episodes-per-round", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("analyze-uncertainty", help="safe/risky uncertainty split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--records", help="episode directory to analyze")
    p.add_argument("--variant", choices=VARIANTS, default="HR-RL",
                   help="variant for freshly rolled episodes when --records is omitted")
    p.add_argument("--n-episodes", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_uncertainty)

    p = sub.add_parser("make-synthetic", help="regenerate the bundled demo corpora")
    p.add_argument("--corpus", choices=("corridor", "boarding", "both"), default="corridor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("serve", help="start the 10 Hz session service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--model", help="fitted reward model for overlays and teacher-drive")
    p.add_argument("--checkpoint", help="student checkpoint enabling student-drive mode")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        config = load_config(args.config)
        cfg_hash = config_hash(config)
        return args.func(args, config, cfg_hash)
    except AssertionError:
        import traceback

        traceback.print_exc()
        return EXIT_INTERNAL
    except (ValueError, OSError, ParseError, RuntimeError, KeyError) as exc:
        print(f"socnav {args.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
