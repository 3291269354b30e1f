"""Command-line entry points tying the modules into reproducible runs.

Every command is a pure function of (config, input files, seed) to output
bytes; reruns with identical inputs are digest-identical.  Exit codes:
0 success, 2 validation error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import nav, neuro, orca, radio, sinrmap, valuetrain, world
from .config import ConfigError


def _rng_for(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(purpose,)))


def cmd_bootstrap(cfg: cfgmod.RunConfig, out_path: str) -> None:
    """Generate the ORCA bootstrap state-value set and fitted standardizer."""
    t = cfg.training
    rng = _rng_for(cfg.seed, 0)
    schedule = cfg.jammer_schedule()
    jammer = schedule.sample(rng)
    env = cfg.env.with_jammer(jammer)
    orca_cfg = orca.OrcaConfig(
        time_horizon=t["orca_time_horizon"], neighbor_range=t["orca_neighbor_range"]
    )
    ok = valuetrain.coverage_predicate(env)
    scenarios = [
        valuetrain.sample_scenario(rng, position_ok=ok, **cfg.scenario_kwargs())
        for _ in range(t["bootstrap_episodes"])
    ]
    pairs, skipped = orca.generate_bootstrap_set(
        scenarios, env, t["gamma"], orca_cfg, j_n=cfg.world["j_n"]
    )
    if not pairs:
        raise RuntimeError("bootstrap produced no state-value pairs")
    standardizer = neuro.fit_standardizer(np.stack([p[0] for p in pairs]))
    orca.write_bootstrap_csv(
        pairs, out_path, standardizer,
        extra_comments=(f"digest={cfg.digest}", f"skipped={skipped}"),
    )
    print(f"bootstrap: wrote {len(pairs)} pairs ({skipped} episodes skipped) to {out_path}")


def cmd_train(cfg: cfgmod.RunConfig, bootstrap_path: str, out_dir: str,
              resume: bool = False) -> None:
    """Run offline value-network training, writing model, curve, and checkpoints."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "value-model.json"
    curve_path = out / "curve.csv"
    state_path = out / "train-state.json"
    replay_path = out / "replay.npz"

    pairs, std_arrays = orca.read_bootstrap_csv(bootstrap_path)
    if not pairs:
        raise ConfigError(f"{bootstrap_path}: empty bootstrap set")
    standardizer = (
        neuro.Standardizer(mean=std_arrays[0], std=std_arrays[1]) if std_arrays else None
    )
    run_cfg = cfg.train_run_config()
    schedule = cfg.jammer_schedule()

    start_episode = 0
    value_net = None
    buffer = None
    rng_states = None
    initial_jammer = None
    curve_prefix: list = []
    if resume:
        if not state_path.exists():
            raise ConfigError(f"{state_path}: no checkpoint to resume from")
        state = json.loads(state_path.read_text())
        start_episode = state["episode"]
        value_net = neuro.load_model(model_path)
        data = np.load(replay_path)
        buffer = valuetrain.ReplayBuffer(run_cfg.replay_capacity)
        for vec, target in zip(data["features"], data["targets"]):
            buffer.push(vec, float(target))
        rng_states = {
            k: _decode_rng_state(state["rng"][k]) for k in ("jammer", "scenario", "episode")
        }
        if state.get("jammer") is not None:
            j = state["jammer"]
            initial_jammer = radio.Jammer(
                position=tuple(j["position"]), height=j["height"], tx_power=j["tx_power"]
            )
        curve_prefix = [
            p for p in valuetrain.read_curve_csv(curve_path) if p.episode < start_episode
        ]

    def on_checkpoint(episode, net, buf, curve, rngs, jammer):
        neuro.save_model(net, model_path, digest=cfg.digest)
        valuetrain.write_curve_csv(
            curve_prefix + curve, curve_path, extra_comments=(f"digest={cfg.digest}",)
        )
        feats, targets = buf.as_arrays()
        np.savez(replay_path, features=feats, targets=targets)
        state = {
            "episode": episode,
            "epsilon": valuetrain.epsilon(min(episode, run_cfg.total_episodes - 1), run_cfg),
            "buffer_digest": buf.digest(),
            "config_digest": cfg.digest,
            "jammer": None if jammer is None else {
                "position": list(jammer.position), "height": jammer.height,
                "tx_power": jammer.tx_power,
            },
            "rng": {k: _encode_rng_state(v) for k, v in rngs.items()},
        }
        state_path.write_text(json.dumps(state, sort_keys=True, indent=1) + "\n")

    if value_net is None and run_cfg.pretrain_epochs > 0:
        rng_init = np.random.default_rng(np.random.SeedSequence(run_cfg.seed).spawn(4)[0])
        value_net = valuetrain.pretrain_value_net(pairs, run_cfg, rng_init, standardizer)

    result = valuetrain.train(
        run_cfg, pairs, cfg.env.without_jammer(), schedule,
        scenario_kwargs=cfg.scenario_kwargs(),
        start_episode=start_episode,
        value_net=value_net,
        buffer=buffer,
        rng_states=rng_states,
        initial_jammer=initial_jammer,
        on_checkpoint=on_checkpoint,
    )
    print(
        f"train: {result.episodes_run} episodes done; model at {model_path}, "
        f"curve at {curve_path}"
    )


def _encode_rng_state(state: dict) -> dict:
    def enc(v):
        if isinstance(v, dict):
            return {k: enc(x) for k, x in v.items()}
        if isinstance(v, (int, str)):
            return v
        return int(v)

    return enc(state)


def _decode_rng_state(state: dict) -> dict:
    return state


def cmd_trainmap(cfg: cfgmod.RunConfig, measurements_path: str | None, out_path: str,
                 curve_path: str | None) -> None:
    """Train the SINR-map regressor from a measurement log or synthetic sampling."""
    m = cfg.mapping
    rng = _rng_for(cfg.seed, 2)
    cloud = sinrmap.MeasurementCloud(m["cloud_capacity"])
    if measurements_path is not None:
        measurements = sinrmap.read_measurement_csv(measurements_path)
        if not measurements:
            raise ConfigError(f"{measurements_path}: empty measurement source")
        expected = sinrmap.FEATURES_PER_STATION * m["k_n"]
        if len(measurements[0].features) != expected:
            raise ConfigError(
                f"{measurements_path}: feature length {len(measurements[0].features)} "
                f"does not match 5 * k_n = {expected}"
            )
    else:
        measurements = sinrmap.sample_measurements(
            cfg.env, m["synthetic_measurements"], rng, cfg.arena_bounds(), m["k_n"]
        )
    for meas in measurements:
        cloud.record(meas)
    model = sinrmap.init_map_model(m["k_n"], rng, tuple(m["hidden"]))
    model, curve = sinrmap.retrain(model, cloud, cfg.map_train_config(), rng)
    sinrmap.save_map_model(model, out_path)
    if curve_path is not None:
        lines = [f"# digest={cfg.digest}", "epoch,holdout_accuracy"]
        lines += [f"{i},{acc!r}" for i, acc in enumerate(curve)]
        Path(curve_path).write_text("\n".join(lines) + "\n")
    print(f"trainmap: final holdout accuracy {curve[-1]:.4f}; model at {out_path}")


def cmd_eval(cfg: cfgmod.RunConfig, value_path: str, map_path: str | None,
             out_path: str, trajectories_dir: str | None, trials: int | None) -> None:
    """Compare navigation modes on identical seeded scenarios and write the report."""
    value_net = neuro.load_model(value_path)
    expected = world.JointState.length(cfg.world["j_n"])
    if value_net.input_size != expected:
        raise ConfigError(
            f"{value_path}: value net input {value_net.input_size} does not match "
            f"joint state length {expected} for j_n={cfg.world['j_n']}"
        )
    modes = cfg.evaluation["modes"]
    map_model = None
    if "proposed" in modes:
        if map_path is None:
            raise ConfigError("eval with 'proposed' mode needs --map-model")
        map_model = sinrmap.load_map_model(map_path)
        if map_model.k_n != cfg.mapping["k_n"]:
            raise ConfigError(
                f"{map_path}: k_n={map_model.k_n} does not match config {cfg.mapping['k_n']}"
            )
    n_trials = trials if trials is not None else cfg.evaluation["trials"]
    eval_seed = cfg.seed + cfg.evaluation["seed_offset"]
    trajectories: dict | None = {} if trajectories_dir else None
    reports = nav.compare_modes(
        value_net, map_model, cfg.env, n_trials, eval_seed, cfg.training["gamma"],
        scenario_kwargs=cfg.scenario_kwargs(eval_mode=True),
        j_n=cfg.world["j_n"], n_speeds=cfg.world["n_speeds"],
        n_headings=cfg.world["n_headings"], modes=modes, trajectories=trajectories,
    )
    nav.write_report_json(reports, out_path, seed=eval_seed, config_digest=cfg.digest)
    if trajectories_dir:
        tdir = Path(trajectories_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        for mode, rows in trajectories.items():
            lines = [f"# digest={cfg.digest}", world.TRAJECTORY_COLUMNS, *rows]
            (tdir / f"trajectories-{mode}.csv").write_text("\n".join(lines) + "\n")
    for mode in modes:
        rep = reports[mode]
        print(
            f"eval[{mode}]: success {rep.success_rate:.3f} "
            f"disconnection {rep.disconnection_rate:.3f} collision {rep.collision_rate:.3f} "
            f"({rep.agent_trials} agent-trials)"
        )


def cmd_covmap(cfg: cfgmod.RunConfig, out_path: str, resolution: float) -> None:
    """Rasterize the quantized coverage map of the configured environment."""
    grid = radio.coverage_grid(cfg.env, cfg.arena_bounds(), resolution)
    radio.write_coverage_csv(grid, out_path, extra_comments=(f"digest={cfg.digest}",))
    fractions = " ".join(f"L{k}={grid.level_fraction(k):.3f}" for k in (0, 1, 2))
    print(f"covmap: {grid.nrows}x{grid.ncols} cells, {fractions}, written to {out_path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavnav",
        description="Jamming-resilient multi-UAV path planning: simulate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a JSON config (defaults used if omitted)")
        p.add_argument("--preset", help=f"jammer preset: {', '.join(sorted(cfgmod.PRESETS))}")
        p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("bootstrap", help="generate ORCA bootstrap state-value pairs")
    common(p)
    p.add_argument("--episodes", type=int, help="override bootstrap episode count")
    p.add_argument("--out", required=True, help="output bootstrap CSV")

    p = sub.add_parser("train", help="offline value-network training")
    common(p)
    p.add_argument("--episodes", type=int, help="override total training episodes")
    p.add_argument("--bootstrap", required=True, help="bootstrap CSV from 'bootstrap'")
    p.add_argument("--out-dir", required=True, help="directory for model/curve/checkpoints")
    p.add_argument("--resume", action="store_true", help="continue from the saved checkpoint")

    p = sub.add_parser("trainmap", help="train the SINR-map regressor")
    common(p)
    p.add_argument("--measurements", help="measurement CSV (synthetic sampling if omitted)")
    p.add_argument("--out", required=True, help="output map model JSON")
    p.add_argument("--curve", help="optional accuracy-curve CSV")

    p = sub.add_parser("eval", help="evaluate navigation modes")
    common(p)
    p.add_argument("--value-model", required=True, help="value network JSON")
    p.add_argument("--map-model", help="SINR map model JSON (needed for 'proposed')")
    p.add_argument("--out", required=True, help="output metrics JSON")
    p.add_argument("--trajectories", help="directory for per-mode trajectory CSVs")
    p.add_argument("--trials", type=int, help="override evaluation trial count")

    p = sub.add_parser("covmap", help="export the quantized coverage grid")
    common(p)
    p.add_argument("--out", required=True, help="output coverage CSV")
    p.add_argument("--resolution", type=float, default=2.0, help="cell size in meters")

    p = sub.add_parser("defaults", help="write the built-in default config")
    p.add_argument("--out", required=True, help="output config JSON path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "defaults":
            cfgmod.write_default(args.out)
            print(f"defaults: wrote {args.out}")
            return 0
        episodes = getattr(args, "episodes", None)
        if episodes is not None and episodes < 1:
            raise ConfigError("--episodes must be >= 1")
        cfg = cfgmod.load(args.config, preset=args.preset, seed=args.seed,
                          episodes=episodes if args.command == "train" else None)
        if args.command == "bootstrap":
            if episodes is not None:
                raw = json.loads(json.dumps(cfg.raw))
                raw["training"]["bootstrap_episodes"] = episodes
                cfg = cfgmod.validate(raw)
            cmd_bootstrap(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.bootstrap, args.out_dir, resume=args.resume)
        elif args.command == "trainmap":
            cmd_trainmap(cfg, args.measurements, args.out, args.curve)
        elif args.command == "eval":
            cmd_eval(cfg, args.value_model, args.map_model, args.out,
                     args.trajectories, args.trials)
        elif args.command == "covmap":
            if args.resolution <= 0:
                raise ConfigError("--resolution must be > 0")
            cmd_covmap(cfg, args.out, args.resolution)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime abort
        print(f"abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
