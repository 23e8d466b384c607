"""Command-line front end for batch experiments.

Subcommands mirror the pipeline stages: `fit` trains the shared models,
`send` produces a frame file, `channel` impairs it, `recv` reconstructs an
image, `eval` compares image pairs, `sweep` runs a configuration grid to CSV.
Exit codes: 0 success, 2 usage error, 3 format error, 4 channel-unrecoverable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from pathlib import Path

import numpy as np

from . import channel as ch
from . import framing
from .autoencoder import fit_basis, load_basis, save_basis
from .codebook import learn_codebook, load_codebook, quantize, save_codebook
from .denoisers import load_context_model, save_context_model, train_context_model
from .images import read_image, write_image
from .masking import DistanceMaskPolicy, PatternMaskPolicy, RandomMaskPolicy
from .metrics import SweepCell, psnr, sweep, write_csv, write_trace_csv
from .pipeline import (
    FrameOptions,
    Models,
    make_denoiser,
    receive_frame,
    run_channel,
    send,
)
from .recovery import RecoveryConfig, trace_rows
from .synthetic import texture_corpus

EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CHANNEL = 4

DEFAULT_SEED = 1234


class UsageError(Exception):
    pass


def _load_models(args, need_context: bool = False) -> Models:
    basis = load_basis(args.basis)
    codebook = load_codebook(args.codebook)
    context = None
    ctx_path = getattr(args, "context", None)
    if ctx_path:
        context = load_context_model(ctx_path)
    elif need_context:
        raise UsageError("--context model file required for the context denoiser")
    return Models(basis=basis, codebook=codebook, context=context)


def _corpus_from_args(args) -> list[np.ndarray]:
    if args.images_dir:
        paths = sorted(Path(args.images_dir).glob("*.p[gp]m"))
        if not paths:
            raise UsageError(f"no .pgm/.ppm images under {args.images_dir}")
        return [read_image(str(p)) for p in paths]
    return texture_corpus(args.synthetic, args.size, args.size, seed=args.seed, s=args.s)


def _policy_from_args(args, seed: int):
    if args.policy == "random":
        return RandomMaskPolicy(p=args.p, seed=seed)
    if args.policy == "pattern":
        return PatternMaskPolicy(pattern_id=args.pattern_id)
    if args.policy == "distance":
        if (args.eta is None) == (args.top_n is None):
            raise UsageError("distance policy needs exactly one of --eta / --top-n")
        return DistanceMaskPolicy(mode=args.mode, eta=args.eta, top_n=args.top_n)
    raise UsageError(f"unknown policy {args.policy}")


# ----------------- subcommands -----------------

def cmd_fit(args) -> int:
    corpus = _corpus_from_args(args)
    print(f"fitting on {len(corpus)} images (s={args.s}, ell={args.ell}, K={args.K})")
    basis = fit_basis(corpus, s=args.s, ell=args.ell, seed=args.seed)
    from .autoencoder import encode

    latents = [encode(im, basis) for im in corpus]
    codebook = learn_codebook(latents, K=args.K, iters=args.iters, seed=args.seed)
    grids = [quantize(lat, codebook) for lat in latents]
    context = train_context_model(grids, K=args.K, alpha=args.alpha)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_basis(str(out / "basis.lgpb"), basis)
    save_codebook(str(out / "codebook.lgcb"), codebook)
    save_context_model(str(out / "context.lgcm"), context)
    print(f"wrote {out}/basis.lgpb, codebook.lgcb, context.lgcm")
    return 0


def cmd_send(args) -> int:
    models = _load_models(args)
    image = read_image(args.image)
    condition = b""
    if args.caption and args.caption_file:
        raise UsageError("use either --caption or --caption-file, not both")
    if args.caption:
        condition = args.caption.encode("utf-8")
    elif args.caption_file:
        condition = Path(args.caption_file).read_bytes()
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    if args.seed is None:
        print(f"no --seed given, using default {seed}")
    policy = _policy_from_args(args, seed)
    options = FrameOptions(coding=args.coding, erase=args.erase)
    result = send(image, policy, models, options, condition)
    Path(args.output).write_bytes(result.frame_bytes)
    if args.truth_out:
        np.save(args.truth_out, result.truth)
    print(f"wrote {args.output} ({len(result.frame_bytes)} bytes)")
    return 0


def cmd_channel(args) -> int:
    frame_bytes = Path(args.frame).read_bytes()
    models = _load_models(args)
    cfg = ch.ChannelConfig(setup=args.setup, per=args.per, ber=args.ber, seed=args.seed)
    skeleton, _, _ = framing.parse_meta(frame_bytes, models.table)
    if skeleton.coding == "huffman" and cfg.bit_noise:
        raise UsageError("bit-noise setups (2, 4) require fixed-length coding")
    rs = run_channel(frame_bytes, cfg, models.table, max_payload=args.max_payload)
    _save_received(args.output, rs)
    masked = ""
    try:
        recovered = ch.recover_stream(rs, models.table)
        masked = recovered.channel_masked
    except ch.HeaderLossError:
        pass
    if args.report:
        with open(args.report, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["run_id", "setup", "per", "ber", "packets_sent", "packets_lost",
                 "bits_erased", "indices_masked_by_channel"]
            )
            writer.writerow(
                [0, cfg.setup, cfg.per, cfg.ber, rs.packets_sent, rs.packets_lost,
                 rs.bits_erased, masked]
            )
    print(
        f"sent {rs.packets_sent} packets, lost {rs.packets_lost}, "
        f"erased {rs.bits_erased} bits -> {args.output}"
    )
    return 0


def _save_received(path: str, rs: ch.ReceivedStream) -> None:
    report = np.array(
        [[r.seq, r.ptype, r.payload_bits, int(r.lost), int(r.corrupt)] for r in rs.report],
        dtype=np.int64,
    ).reshape(-1, 5)
    np.savez(
        path,
        meta_ok=np.array(rs.meta is not None),
        meta=np.frombuffer(rs.meta or b"", dtype=np.uint8),
        data=np.frombuffer(rs.data, dtype=np.uint8),
        erased=rs.erased,
        report=report,
    )


def _load_received(path: str) -> ch.ReceivedStream:
    with np.load(path) as z:
        meta = z["meta"].tobytes() if bool(z["meta_ok"]) else None
        report = [
            ch.PacketReport(int(s), int(t), int(b), bool(l), bool(c))
            for s, t, b, l, c in z["report"]
        ]
        return ch.ReceivedStream(
            meta=meta, data=z["data"].tobytes(), erased=z["erased"], report=report
        )


def cmd_recv(args) -> int:
    models = _load_models(args, need_context=args.denoiser == "context")
    path = Path(args.received)
    if path.suffix == ".npz":
        rs = _load_received(str(path))
        recovered = ch.recover_stream(rs, models.table)
    else:  # a bare frame file: no channel
        recovered = framing.interpret(path.read_bytes(), models.table)
    truth = np.load(args.truth) if args.truth else None
    if args.denoiser == "oracle" and truth is None:
        raise UsageError("--denoiser oracle requires --truth")
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    if args.seed is None:
        print(f"no --seed given, using default {seed}")
    rcfg = RecoveryConfig(tau=args.tau, steps=args.T, seed=seed)
    denoiser = make_denoiser(args.denoiser, models, truth=truth)
    out = receive_frame(recovered, models, rcfg, denoiser)
    write_image(args.output, out.image)
    if args.trace:
        write_trace_csv(args.trace, trace_rows(out.trace, truth))
    print(f"wrote {args.output} (mask grew by {out.channel_masked} positions in channel)")
    return 0


def cmd_eval(args) -> int:
    if len(args.images) % 2:
        raise UsageError("eval needs an even number of images: orig recon [orig recon ...]")
    rows = []
    for i in range(0, len(args.images), 2):
        a = read_image(args.images[i])
        b = read_image(args.images[i + 1])
        mse = float(np.mean((a - b) ** 2))
        rows.append(
            {
                "original": args.images[i],
                "reconstruction": args.images[i + 1],
                "mse": round(mse, 8),
                "psnr_db": round(psnr(a, b), 4),
            }
        )
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    writer = csv.DictWriter(out, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    if args.output:
        out.close()
    return 0


# ----------------- sweep -----------------

def _parse_list(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def _steps_pair(token: str) -> tuple[int, int]:
    try:
        tau, steps = token.split("/")
        return int(tau), int(steps)
    except ValueError:
        raise UsageError(f"steps entry {token!r} must look like 4/8") from None


def cmd_sweep(args) -> int:
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise UsageError(f"cannot read config {args.config}")
    corpus_sec = cp["corpus"] if "corpus" in cp else {}
    n = int(corpus_sec.get("synthetic", 120))
    size = int(corpus_sec.get("size", 96))
    seed = int(corpus_sec.get("seed", DEFAULT_SEED))
    n_train = int(corpus_sec.get("train", max(1, n * 3 // 4)))
    models_sec = cp["models"] if "models" in cp else {}
    s = int(models_sec.get("s", 8))
    ell = int(models_sec.get("ell", 16))
    K = int(models_sec.get("K", 64))
    iters = int(models_sec.get("iters", 15))
    alpha = float(models_sec.get("alpha", 0.5))
    corpus = texture_corpus(n, size, size, seed=seed, s=s)
    train, test = corpus[:n_train], corpus[n_train:]
    if not test:
        raise UsageError("corpus has no held-out images; lower `train`")
    basis = fit_basis(train, s=s, ell=ell, seed=seed)
    from .autoencoder import encode

    latents = [encode(im, basis) for im in train]
    codebook = learn_codebook(latents, K=K, iters=iters, seed=seed)
    grids = [quantize(lat, codebook) for lat in latents]
    context = train_context_model(grids, K=K, alpha=alpha)
    models = Models(basis=basis, codebook=codebook, context=context)
    grid_sec = cp["grid"] if "grid" in cp else {}
    policies = []
    for name in _parse_list(grid_sec.get("policy", "random")):
        if name == "random":
            for p in _parse_list(grid_sec.get("p", "0.25")):
                policies.append(RandomMaskPolicy(p=float(p), seed=seed))
        elif name == "pattern":
            policies.append(PatternMaskPolicy(pattern_id=0))
        elif name == "distance":
            top_n = grid_sec.get("top_n")
            eta = grid_sec.get("eta")
            policies.append(
                DistanceMaskPolicy(
                    mode=grid_sec.get("mode", "lowest"),
                    eta=float(eta) if eta else None,
                    top_n=int(top_n) if top_n else None,
                )
            )
        else:
            raise UsageError(f"unknown policy {name!r} in sweep grid")
    steps = [_steps_pair(t) for t in _parse_list(grid_sec.get("steps", "4/8"))]
    setups = [int(x) for x in _parse_list(grid_sec.get("setup", "3"))]
    pers = [float(x) for x in _parse_list(grid_sec.get("per", "0.0"))]
    bers = [float(x) for x in _parse_list(grid_sec.get("ber", "0.0"))]
    denoiser = grid_sec.get("denoiser", "context")
    coding = grid_sec.get("coding", "fixed")
    erase = grid_sec.get("erase", "false").lower() in ("1", "true", "yes")
    cells = [
        SweepCell(
            policy=pol, tau=tau, steps=T, setup=setup, per=per, ber=ber,
            denoiser=denoiser, coding=coding, erase=erase,
        )
        for pol in policies
        for (tau, T) in steps
        for setup in setups
        for per in pers
        for ber in bers
    ]
    out_sec = cp["output"] if "output" in cp else {}
    n_eval = min(int(out_sec.get("images", 16)), len(test))
    print(f"sweep: {len(cells)} cells x {n_eval} images")
    records = sweep(cells, test[:n_eval], models, base_seed=seed, jobs=args.jobs)
    write_csv(args.output, records)
    failures = [r for r in records if r.error]
    for r in failures:
        print(f"cell {r.run_id} failed: {r.error}", file=sys.stderr)
    print(f"wrote {args.output} ({len(records)} rows, {len(failures)} flagged)")
    return 0


# ----------------- parser -----------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqcom", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="train basis, codebook, and context model")
    p.add_argument("--images-dir", help="directory of .pgm/.ppm training images")
    p.add_argument("--synthetic", type=int, default=200, help="texture count when no dir")
    p.add_argument("--size", type=int, default=96, help="synthetic image side length")
    p.add_argument("-s", type=int, default=8, help="patch size / downsampling factor")
    p.add_argument("--ell", type=int, default=16, help="latent channels")
    p.add_argument("-K", type=int, default=256, help="codebook size")
    p.add_argument("--iters", type=int, default=20, help="k-means iterations")
    p.add_argument("--alpha", type=float, default=0.5, help="context-model smoothing")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out-dir", default="models", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("send", help="encode an image into a frame file")
    p.add_argument("image")
    p.add_argument("--basis", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--policy", choices=["random", "pattern", "distance"], default="random")
    p.add_argument("--p", type=float, default=0.25, help="random-policy masking probability")
    p.add_argument("--pattern-id", type=int, default=0)
    p.add_argument("--mode", choices=["lowest", "highest"], default="lowest")
    p.add_argument("--eta", type=float, help="distance threshold")
    p.add_argument("--top-n", type=int, help="distance count selector")
    p.add_argument("--coding", choices=["fixed", "huffman"], default="fixed")
    p.add_argument("--erase", action="store_true", help="drop masked symbols from the payload")
    p.add_argument("--caption", help="condition text")
    p.add_argument("--caption-file", help="condition bytes from a file")
    p.add_argument("--seed", type=int, default=None, help="mask seed (random policy)")
    p.add_argument("--truth-out", help="write the quantized grid as .npy")
    p.add_argument("-o", "--output", default="frame.lggm")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("channel", help="run a frame file through the lossy channel")
    p.add_argument("frame")
    p.add_argument("--basis", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--setup", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--per", type=float, default=0.0)
    p.add_argument("--ber", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--max-payload", type=int, default=ch.DEFAULT_MAX_PAYLOAD)
    p.add_argument("--report", help="delivery report CSV path")
    p.add_argument("-o", "--output", default="received.npz")
    p.set_defaults(func=cmd_channel)

    p = sub.add_parser("recv", help="reconstruct an image from a received stream")
    p.add_argument("received", help=".npz received stream or a bare .lggm frame")
    p.add_argument("--basis", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--context", help="context-model file (context denoiser)")
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--T", type=int, required=True, dest="T")
    p.add_argument("--denoiser", choices=["oracle", "context", "uniform"], default="context")
    p.add_argument("--truth", help="ground-truth .npy (oracle denoiser / trace)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trace", help="per-iteration trace CSV path")
    p.add_argument("-o", "--output", default="reconstruction.pgm")
    p.set_defaults(func=cmd_recv)

    p = sub.add_parser("eval", help="PSNR/MSE over image pairs")
    p.add_argument("images", nargs="+", help="orig recon [orig recon ...]")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a configuration grid from an ini-style file")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except framing.FrameFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ch.HeaderLossError as exc:
        print(f"channel error: {exc}", file=sys.stderr)
        return EXIT_CHANNEL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
