"""Command-line entry point: ``latenthdr <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import imageio
from .bracket import ExposureBracket, clipping_stats, format_ev, generate_bracket, parse_ev_range
from .head import (ExposureHead, HeadConfig, ablate_no_film, step_loss, tiny_config, train)
from .latent import encode, posterior_stats, DEFAULT_FACTOR, DEFAULT_SIGMA
from .merge import MergeConfig, blend_with_input, merge_bracket
from .metrics import dynamic_range_stops, eval_l2h, l2h, latent_trajectory
from .neural import weights as weightfile
from .neural.gradcheck import grad_check
from .neural.optim import AdamConfig
from .rng import normal_stream
from .scenegen import SceneSpec, corpus_specs, generate_scene

DEFAULT_EVS = "-7:5:1"
MANIFEST = "manifest.txt"


class CliError(Exception):
    pass


def banner(cmd: str, args: argparse.Namespace) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    print(f"# latenthdr {cmd} " + " ".join(f"{k}={v}" for k, v in items.items()), flush=True)


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file or directory: {p}")
    return p


def _merge_cfg(args) -> MergeConfig:
    return MergeConfig(tau_black=args.tau_black, tau_white=args.tau_white, eps=args.eps,
                       channelwise=getattr(args, "channelwise", False))


def _read_bracket(directory) -> ExposureBracket:
    d = _require(directory)
    manifest = d / MANIFEST
    entries = []
    if manifest.exists():
        for line in manifest.read_text().splitlines():
            if not line or line.startswith("#") or line.startswith("file\t"):
                continue
            name, ev = line.split("\t")[:2]
            entries.append((float(ev), imageio.load_ppm(_require(d / name))))
    else:
        for f in sorted(d.glob("ev*.ppm")):
            entries.append((float(f.stem[2:]), imageio.load_ppm(f)))
    if not entries:
        raise CliError(f"no exposures found in {d}")
    return ExposureBracket.from_entries(entries)


def _scene_files(directory) -> list[Path]:
    files = sorted(_require(directory).glob("*.pfm"))
    if not files:
        raise CliError(f"no .pfm scenes in {directory}")
    return files


def _load_model(path):
    tensors = weightfile.load(_require(path))
    head = ExposureHead.from_tensors(tensors)
    train_evs = tensors.get("meta/train_evs")
    evs = [float(e) for e in train_evs] if train_evs is not None else None
    return head, evs


def _model_evs(args, head, train_evs):
    if args.evs:
        return parse_ev_range(args.evs)
    if head.cfg.ev_grid:
        return list(head.cfg.ev_grid)
    return train_evs or parse_ev_range(DEFAULT_EVS)


# -- subcommands ---------------------------------------------------------------

def cmd_gen_scenes(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    template = SceneSpec(width=args.width, height=args.height, num_lights=args.num_lights,
                         dr_target=args.dr_target, base_level=args.base_level)
    specs = corpus_specs(args.count, args.base_seed, template)
    if args.dr_max is not None:
        span = args.dr_max - args.dr_target
        specs = [SceneSpec(**{**s.__dict__, "dr_target": args.dr_target + span * i / max(len(specs) - 1, 1)})
                 for i, s in enumerate(specs)]
    lines = ["file\tseed\twidth\theight\tnum_lights\tdr_target\tbase_level"]
    for i, spec in enumerate(specs):
        name = f"scene{i:04d}.pfm"
        imageio.save_pfm(out / name, generate_scene(spec))
        lines.append(f"{name}\t{spec.seed}\t{spec.width}\t{spec.height}\t{spec.num_lights}\t"
                     f"{spec.dr_target:.6g}\t{spec.base_level:.6g}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(specs)} scenes to {out}")


def cmd_bracket(args):
    hdr = imageio.load_pfm(_require(args.input))
    bracket = generate_bracket(hdr, parse_ev_range(args.evs))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["file\tev"]
    for ev, img in bracket:
        name = f"{format_ev(ev)}.ppm"
        imageio.save_ppm(out / name, img)
        lines.append(f"{name}\t{ev:.6g}")
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    print(f"wrote {len(bracket)} exposures to {out}")


def cmd_stats(args):
    if args.bracket_dir:
        bracket = _read_bracket(args.bracket_dir)
    elif args.input:
        bracket = generate_bracket(imageio.load_pfm(_require(args.input)), parse_ev_range(args.evs))
    else:
        raise CliError("stats needs --bracket-dir or --input")
    print("ev\tdark_pct\thighlight_pct")
    for rec in clipping_stats(bracket):
        print(f"{rec.ev:+.2f}\t{rec.dark_pct:.4f}\t{rec.highlight_pct:.4f}")


def cmd_merge(args):
    cfg = _merge_cfg(args)
    hdr = merge_bracket(_read_bracket(args.bracket_dir), cfg, threads=args.threads)
    if args.blend:
        hdr = blend_with_input(hdr, imageio.load_ppm(_require(args.blend)), cfg)
    imageio.save_pfm(args.out, hdr)
    print(f"wrote {args.out}")


def _posterior_inputs(directory):
    d = _require(directory)
    ppms = sorted(d.glob("*.ppm"))
    if ppms:
        return [imageio.load_ppm(p) for p in ppms]
    from .bracket import expose
    return [expose(imageio.load_pfm(p), 0.0) for p in _scene_files(d)]


def cmd_posterior_stats(args):
    st = posterior_stats(_posterior_inputs(args.data_dir), args.sigma0, args.seed, args.factor)
    print("sigma_mean\tsigma_max\trmse_z_mu\tmae_z_mu\tresid_mean\tresid_std")
    print(f"{st.sigma_mean:.6g}\t{st.sigma_max:.6g}\t{st.rmse_z_mu:.6g}\t{st.mae_z_mu:.6g}\t"
          f"{st.resid_mean:.6g}\t{st.resid_std:.6g}")


def cmd_train(args):
    corpus = [imageio.load_pfm(p) for p in _scene_files(args.data_dir)]
    evs = parse_ev_range(args.evs)
    cfg = HeadConfig(latent_channels=3 * args.factor ** 2, base_width=args.base_width)
    if args.no_film:
        cfg = ablate_no_film(cfg, evs)
    t0 = time.time()
    result = train(corpus, evs, cfg, AdamConfig(lr=args.lr), args.steps, args.seed,
                   factor=args.factor, sigma0=args.sigma0, sampled_z=args.sampled_z,
                   full_bracket=args.full_bracket)
    tensors = result.head.to_tensors()
    tensors["meta/train_evs"] = np.array(evs)
    weightfile.save(args.out, tensors)
    trace_path = Path(args.trace) if args.trace else Path(str(args.out) + ".trace.txt")
    trace_path.write_text("step\tloss\n" + "".join(f"{i}\t{v:.17g}\n" for i, v in enumerate(result.trace)))
    tr = result.trace
    if tr:
        k = min(100, len(tr))
        print(f"steps={len(tr)} lead{k}={np.mean(tr[:k]):.6g} trail{k}={np.mean(tr[-k:]):.6g} "
              f"time={time.time() - t0:.1f}s")
    print(f"wrote {args.out} and {trace_path}")


def gradcheck_tiny(seed: int, h: float = 1e-4) -> tuple[float, int]:
    """Finite-difference check of the full tiny head; returns (max rel error, #params)."""
    cfg = tiny_config()
    head = ExposureHead.init(cfg, seed)
    w = head.store.params["out.w"]
    # a nonzero output conv so every parameter receives gradient
    w[:] = 0.01 * normal_stream(seed + 1, w.size).reshape(w.shape)
    shape = (cfg.latent_channels, 16, 16)
    z = 0.3 * normal_stream(seed + 2, int(np.prod(shape))).reshape(shape)
    target = z + 0.02 * normal_stream(seed + 3, z.size).reshape(shape)
    pairs = [(2.0, target), (-3.0, target)]
    err = grad_check(lambda store, backward: step_loss(head, z, pairs, backward), head.store, h)
    return err, head.store.num_params()


def cmd_gradcheck(args):
    err, n = gradcheck_tiny(args.seed, args.h)
    ok = err < 1e-3
    print("params\tmax_rel_err\tstatus")
    print(f"{n}\t{err:.3e}\t{'PASS' if ok else 'FAIL'}")
    if not ok:
        raise CliError(f"gradient check failed: max relative error {err:.3e} >= 1e-3")


def cmd_l2h(args):
    head, train_evs = _load_model(args.model)
    ldr = imageio.load_ppm(_require(args.input))
    factor = _factor_for(head)
    hdr = l2h(ldr, head, _model_evs(args, head, train_evs), _merge_cfg(args), args.blend,
              factor, args.threads)
    imageio.save_pfm(args.out, hdr)
    print(f"wrote {args.out}")


def _factor_for(head) -> int:
    f = int(round((head.cfg.latent_channels / 3) ** 0.5))
    if 3 * f * f != head.cfg.latent_channels:
        raise CliError(f"model latent channels {head.cfg.latent_channels} are not 3*f^2")
    return f


def cmd_stops(args):
    lo, hi = (float(x) for x in args.pct.split(","))
    rep = dynamic_range_stops(imageio.load_pfm(_require(args.input)), lo, hi)
    print("p_low\tp_high\tstops\tclamped")
    print(f"{rep.p_low:.6g}\t{rep.p_high:.6g}\t{rep.stops:.6f}\t{int(rep.clamped)}")


def cmd_trajectory(args):
    head, train_evs = _load_model(args.model)
    factor = _factor_for(head)
    evs = _model_evs(args, head, train_evs)
    z = encode(imageio.load_ppm(_require(args.input)), factor, 0.0).mu
    gt = None
    if args.gt_hdr:
        bracket = generate_bracket(imageio.load_pfm(_require(args.gt_hdr)), evs)
        gt = [encode(img, factor, 0.0).mu for img in bracket.images]
    text = "\n".join(latent_trajectory(z, head, evs, gt).lines()) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")


def cmd_eval(args):
    from .bracket import expose
    head, train_evs = _load_model(args.model)
    truths = [imageio.load_pfm(p) for p in _scene_files(args.data_dir)]
    corpus = [(expose(t, 0.0), t) for t in truths]
    report = eval_l2h(corpus, head, _merge_cfg(args), _model_evs(args, head, train_evs),
                      args.blend, _factor_for(head))
    print("\n".join(report.lines()))


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")

    merge_opts = argparse.ArgumentParser(add_help=False)
    merge_opts.add_argument("--tau-black", type=float, default=0.05)
    merge_opts.add_argument("--tau-white", type=float, default=0.95)
    merge_opts.add_argument("--eps", type=float, default=1e-8)
    merge_opts.add_argument("--channelwise", action="store_true", help="per-channel merge weights")

    parser = argparse.ArgumentParser(prog="latenthdr", description="Exposure-bracket HDR toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, func, help_text, parents=()):
        p = sub.add_parser(name, help=help_text, parents=[common, *parents])
        p.set_defaults(func=func)
        return p

    p = add("gen-scenes", cmd_gen_scenes, "write procedural HDR scenes as PFM plus a manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--num-lights", type=int, default=3)
    p.add_argument("--dr-target", type=float, default=10.0)
    p.add_argument("--dr-max", type=float, default=None,
                   help="spread dr_target linearly from --dr-target to this value")
    p.add_argument("--base-level", type=float, default=0.05)

    p = add("bracket", cmd_bracket, "synthesize an LDR exposure stack from a PFM")
    p.add_argument("--input", required=True)
    p.add_argument("--evs", default=DEFAULT_EVS, help="lo:hi:step (default -7:5:1)")
    p.add_argument("--out-dir", required=True)

    p = add("stats", cmd_stats, "per-EV clipping statistics")
    p.add_argument("--bracket-dir")
    p.add_argument("--input")
    p.add_argument("--evs", default=DEFAULT_EVS)

    p = add("merge", cmd_merge, "merge a bracket directory into a radiance map", [merge_opts])
    p.add_argument("--bracket-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--blend", metavar="INPUT_PPM")

    p = add("posterior-stats", cmd_posterior_stats, "posterior spread and sampling statistics")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--factor", type=int, default=DEFAULT_FACTOR)

    p = add("train", cmd_train, "train the exposure head")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--evs", default=DEFAULT_EVS)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="loss trace path (default <out>.trace.txt)")
    p.add_argument("--no-film", action="store_true")
    p.add_argument("--sampled-z", action="store_true")
    p.add_argument("--full-bracket", action="store_true", help="use every EV of a scene per step")
    p.add_argument("--base-width", type=int, default=16)
    p.add_argument("--factor", type=int, default=DEFAULT_FACTOR)
    p.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of the tiny exposure head")
    p.add_argument("--h", type=float, default=1e-4)

    p = add("l2h", cmd_l2h, "LDR image to HDR with a trained head", [merge_opts])
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--evs")
    p.add_argument("--blend", action="store_true")

    p = add("stops", cmd_stops, "dynamic range of a radiance map in stops")
    p.add_argument("--input", required=True)
    p.add_argument("--pct", default="0.1,99.9")

    p = add("trajectory", cmd_trajectory, "latent distance from the base exposure per EV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--evs")
    p.add_argument("--gt-hdr", help="ground-truth PFM for the reference trajectory")
    p.add_argument("--out")

    p = add("eval", cmd_eval, "l2h evaluation over a directory of ground-truth PFMs", [merge_opts])
    p.add_argument("--data-dir", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--evs")
    p.add_argument("--blend", action="store_true")
    return parser


def _attach_range_values(argv: list[str]) -> list[str]:
    # "--evs -7:5:1" would otherwise be read as an unknown option
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--evs" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"--evs={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_attach_range_values(argv))
    banner(args.command, args)
    try:
        args.func(args)
    except (CliError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = str(exc).strip() or exc.__class__.__name__
        print(f"error: {msg.splitlines()[0]}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
