"""Command-line surface.

Subcommands: encode, decode, sweep, bdrate, pfo-demo, srr, schedule-dump.
Every run is deterministic given --seed. Failures print one machine-parsable
line ``error: <code>: <message>`` on stderr and exit with the error's code.

Config files are flat ``key = value`` text (UTF-8, ``#`` comments); list
values are comma-separated. Each subcommand documents its keys in --help.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import codec, container, diffusion, rdeval, schedule, semantic
from .denoisers import (
    GaussianAnalyticDenoiser,
    MlpDenoiser,
    PerturbedDenoiser,
    ZeroDenoiser,
)
from .errors import InvalidRangeError, ResidiffError


def parse_config(text: str) -> dict[str, str]:
    """Flat key = value lines; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidRangeError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str) -> dict[str, str]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def default_vocabulary(path: str | None = None, embed_dim: int = 8) -> semantic.Vocabulary:
    if path:
        return semantic.Vocabulary.from_file(path, embed_dim=embed_dim)
    ref = resources.files("residiff").joinpath("data/vocab.txt")
    with resources.as_file(ref) as p:
        return semantic.Vocabulary.from_file(p, embed_dim=embed_dim)


def _schedule_from_args(args) -> schedule.Schedule:
    cfg = schedule.ScheduleConfig(
        kind=args.schedule_kind.replace("-", "_"),
        total_steps=args.total_steps,
        beta_start=args.beta_start,
        beta_end=args.beta_end,
    )
    return schedule.build_schedule(cfg)


def _add_schedule_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schedule-kind", default=schedule.DEFAULT_KIND,
                   choices=["constant", "linear", "scaled-linear", "scaled_linear", "cosine"])
    p.add_argument("--total-steps", type=int, default=schedule.DEFAULT_T)
    p.add_argument("--beta-start", type=float, default=schedule.DEFAULT_BETA_START)
    p.add_argument("--beta-end", type=float, default=schedule.DEFAULT_BETA_END)


def _build_denoiser(spec: str, sched, endpoint: int, eta: float):
    """'zero', 'analytic:mu,prior_var,quant_var', or a parameter blob path."""
    if spec == "zero":
        return ZeroDenoiser()
    if spec.startswith("analytic:"):
        mu, prior_var, quant_var = _floats(spec.split(":", 1)[1])
        return GaussianAnalyticDenoiser(mu, prior_var, quant_var, sched, endpoint, eta)
    return MlpDenoiser.from_blob(Path(spec).read_bytes())


# -- subcommand handlers ------------------------------------------------------


def cmd_encode(args) -> int:
    z = container.read_latent_file(Path(args.infile).read_bytes())
    sched = _schedule_from_args(args)
    q = codec.quantize(z, args.step)
    model = rdeval.fit_symbol_model(q.symbols)
    latent_section = codec.encode_latent(q, model)

    text_section = None
    if args.caption is not None:
        vocab = default_vocabulary(args.vocab)
        tokens = semantic.tokenize(args.caption, vocab)
        text_section = semantic.encode_indices(tokens, vocab, args.text_mode)

    box = container.Container(
        schedule_id=schedule.KIND_IDS[sched.kind],
        total_steps=sched.total_steps,
        endpoint_step=args.nr,
        shape=z.shape,
        quant_step=args.step,
        eta=args.eta,
        latent_section=latent_section,
        text_section=text_section,
    )
    data = container.write_container(box)
    Path(args.out).write_bytes(data)
    rates = box.rates()
    print(f"container-bytes: {len(data)}")
    print(f"latent-bits: {rates['latent_bits']}")
    print(f"text-bits: {rates['text_bits']}")
    print(f"total-bits: {rates['total_bits']}")
    return 0


def cmd_decode(args) -> int:
    box = container.read_container(Path(args.infile).read_bytes())
    kind = schedule.KIND_FROM_ID.get(box.schedule_id)
    if kind is None:
        raise InvalidRangeError(f"unknown schedule id {box.schedule_id}")
    sched = schedule.build_schedule(
        schedule.ScheduleConfig(
            kind=kind,
            total_steps=box.total_steps,
            beta_start=args.beta_start,
            beta_end=args.beta_end,
        )
    )
    q = codec.decode_latent(box.latent_section, None, box.shape, box.quant_step)
    zc = codec.dequantize(q)
    eta = float(box.eta if args.eta is None else args.eta)
    denoiser = _build_denoiser(args.denoiser, sched, box.endpoint_step, eta)
    steps = diffusion.make_step_list(box.endpoint_step, args.steps)
    out = diffusion.sample(
        denoiser, zc, box.endpoint_step, steps, eta, sched,
        np.random.default_rng(args.seed),
    )
    Path(args.out).write_bytes(container.write_latent_file(out))
    if box.text_section is not None:
        vocab = default_vocabulary(args.vocab)
        tokens = semantic.decode_indices(box.text_section, vocab)
        print(f"caption: {semantic.detokenize(tokens, vocab)}")
    rates = box.rates()
    print(f"latent-bits: {rates['latent_bits']}")
    print(f"text-bits: {rates['text_bits']}")
    print(f"total-bits: {rates['total_bits']}")
    return 0


def _sweep_from_config(cfg: dict[str, str]):
    seed = int(cfg.get("seed", "0"))
    dim = int(cfg.get("dim", "16"))
    count = int(cfg.get("latents", "4096"))
    pixels = int(cfg.get("pixels", str(dim)))
    prior_mean = float(cfg.get("prior_mean", "0.0"))
    prior_var = float(cfg.get("prior_var", "1.0"))
    error_std = float(cfg.get("error_std", "0.0"))
    eta = float(cfg.get("eta", "0"))
    num_steps = int(cfg.get("steps", "4"))
    quant_steps = _floats(cfg.get("quant_steps", "0.25,0.5,1.0,2.0,4.0"))
    endpoints = _ints(cfg.get("endpoints", "40,80,160,240,320,480,640,800"))
    sched = schedule.build_schedule(
        schedule.ScheduleConfig(
            kind=cfg.get("schedule_kind", schedule.DEFAULT_KIND).replace("-", "_"),
            total_steps=int(cfg.get("total_steps", str(schedule.DEFAULT_T))),
            beta_start=float(cfg.get("beta_start", str(schedule.DEFAULT_BETA_START))),
            beta_end=float(cfg.get("beta_end", str(schedule.DEFAULT_BETA_END))),
        )
    )
    rng = np.random.default_rng(seed)
    dataset = prior_mean + np.sqrt(prior_var) * rng.standard_normal((count, dim))

    kind = cfg.get("denoiser", "analytic")
    if kind == "analytic":
        def factory(step, endpoint):
            inner = GaussianAnalyticDenoiser(
                prior_mean, prior_var, step * step / 12.0, sched, endpoint, 0.0
            )
            if error_std > 0:
                return PerturbedDenoiser(
                    inner, error_std,
                    np.random.default_rng([seed, 1000 + int(step * 1e6), endpoint]),
                )
            return inner
        denoiser = factory
    elif kind == "zero":
        denoiser = ZeroDenoiser()
    else:
        denoiser = MlpDenoiser.from_blob(Path(kind).read_bytes())

    return rdeval.sweep(
        quant_steps, endpoints, dataset, sched, denoiser, eta,
        num_steps=num_steps, pixels_per_latent=pixels, seed=seed,
    )


def cmd_sweep(args) -> int:
    surf = _sweep_from_config(load_config(args.config))
    Path(args.out).write_text(rdeval.surface_to_csv(surf), encoding="utf-8")
    if args.svg:
        Path(args.svg).write_text(rdeval.surface_to_svg(surf), encoding="utf-8")
    for bpp, endpoint in rdeval.peak_projection(surf):
        print(f"peak: bpp={bpp!r} endpoint={endpoint}")
    return 0


def cmd_bdrate(args) -> int:
    anchor = rdeval.curve_from_csv(Path(args.anchor).read_text(encoding="utf-8"))
    test = rdeval.curve_from_csv(Path(args.test).read_text(encoding="utf-8"))
    print(f"{rdeval.bd_rate(anchor, test):.6f}")
    return 0


def cmd_pfo_demo(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    seed = int(cfg.get("seed", "0"))
    embed_dim = int(cfg.get("embed_dim", "8"))
    latent_dim = int(cfg.get("latent_dim", "4"))
    endpoint = int(cfg.get("endpoint", "200"))
    iterations = int(cfg.get("iterations", "60"))
    rng = np.random.default_rng(seed)

    vocab = default_vocabulary(cfg.get("vocab"), embed_dim=embed_dim)
    sched = schedule.build_schedule(schedule.ScheduleConfig())
    init_tokens = semantic.tokenize(cfg.get("init", "a photo of a cat"), vocab)
    if not init_tokens:
        raise InvalidRangeError("init caption tokenized to nothing")

    # Small world: one residual pair, per-step recorded noises, and a noise
    # predictor whose condition slot receives the pooled prompt embedding.
    z0 = rng.standard_normal(latent_dim)
    zc = z0 + 0.3 * rng.standard_normal(latent_dim)
    pair = diffusion.ResidualPair(z0, zc)
    step_pool = tuple(diffusion.make_step_list(endpoint, int(cfg.get("steps", "4"))))
    noises = {n: rng.standard_normal(latent_dim) for n in step_pool}
    z_by_step = {
        n: diffusion.forward_sample(pair, n, endpoint, sched, 0.0, noises[n])
        for n in step_pool
    }
    target_tokens = semantic.tokenize(cfg.get("target", "a red barn"), vocab)
    target_vec = vocab.embeddings[target_tokens].mean(axis=0)
    mlp = MlpDenoiser(
        latent_dim=latent_dim, hidden=16, embed_dim=8,
        condition=np.zeros(embed_dim), rng=rng,
    )

    def denoise_loss(projected, n):
        cond = projected.mean(axis=0)
        x = mlp._input(z_by_step[n], n, zc, cond)
        out, acts = mlp._forward(x)
        diff = out - noises[n]
        loss = float(diff @ diff) / diff.size
        _, _, d_input = mlp.backward(x, acts, 2.0 * diff / diff.size)
        d_cond = d_input[-embed_dim:]
        grad = np.broadcast_to(d_cond / projected.shape[0], projected.shape).copy()
        return loss, grad

    pfo_cfg = semantic.PfoConfig(
        learning_rate=float(cfg.get("learning_rate", "0.3")),
        iterations=iterations,
        loss_weight=float(cfg.get("loss_weight", "1.0")),
        aux_weight=float(cfg.get("aux_weight", "0.1")),
        step_pool=step_pool,
    )
    loss_fn = semantic.composite_loss(denoise_loss, pfo_cfg, aux_target=target_vec)
    result = semantic.pfo_optimize(init_tokens, loss_fn, vocab, pfo_cfg, rng)
    words = " ".join(vocab.token_string(t) for t in result.tokens)
    print(f"best-loss: {result.loss:.6f}")
    print(f"best-tokens: {result.tokens}")
    print(f"best-text: {words}")
    print(f"first-loss: {result.history[0]:.6f}")
    return 0


def cmd_srr(args) -> int:
    full = Path(args.full).read_text(encoding="utf-8").strip()
    decoded = Path(args.decoded).read_text(encoding="utf-8").strip()
    if args.endpoint:
        client = semantic.HttpCaptioner(args.endpoint, timeout=args.timeout)
    else:
        client = semantic.MockCaptioner()
    print(semantic.srr_residual(full, decoded, client))
    return 0


def cmd_schedule_dump(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        sched = schedule.build_schedule(
            schedule.ScheduleConfig(
                kind=cfg.get("schedule_kind", schedule.DEFAULT_KIND).replace("-", "_"),
                total_steps=int(cfg.get("total_steps", str(schedule.DEFAULT_T))),
                beta_start=float(cfg.get("beta_start", str(schedule.DEFAULT_BETA_START))),
                beta_end=float(cfg.get("beta_end", str(schedule.DEFAULT_BETA_END))),
            )
        )
    else:
        sched = schedule.build_schedule(schedule.ScheduleConfig())
    text = schedule.dump_csv(sched)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="residiff",
        description="Residual-guided compression-aware diffusion codec toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="quantize and entropy-code a latent file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--nr", type=int, required=True,
                   help="noising endpoint / denoising start step")
    p.add_argument("--caption", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--eta", type=int, choices=[0, 1], default=0)
    p.add_argument("--text-mode", choices=["fixed", "entropy"], default="fixed")
    p.add_argument("--vocab", default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_schedule_args(p)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream and run the sampler")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--denoiser", default="zero",
                   help="'zero', 'analytic:mu,prior_var,quant_var', or blob path")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--eta", type=int, choices=[0, 1], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", default=None)
    p.add_argument("--beta-start", type=float, default=schedule.DEFAULT_BETA_START)
    p.add_argument("--beta-end", type=float, default=schedule.DEFAULT_BETA_END)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("sweep", help="rate x endpoint grid evaluation to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("bdrate", help="delta-rate between two curve CSVs")
    p.add_argument("--anchor", required=True)
    p.add_argument("--test", required=True)
    p.set_defaults(fn=cmd_bdrate)

    p = sub.add_parser("pfo-demo", help="projected prompt optimization demo")
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_pfo_demo)

    p = sub.add_parser("srr", help="semantic residual between two captions")
    p.add_argument("--full", required=True)
    p.add_argument("--decoded", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mock", action="store_true", default=True)
    group.add_argument("--endpoint", default=None)
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(fn=cmd_srr)

    p = sub.add_parser("schedule-dump", help="emit (n, beta, alpha_bar) CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_schedule_dump)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ResidiffError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: missing-file: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
