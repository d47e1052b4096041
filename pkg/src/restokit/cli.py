"""Command-line entry points: ``datagen`` (corpus builders) and ``bench``
(experiment protocols).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench as bench_mod
from . import codecs, datagen
from .agents import OracleSlowBackend, RuleFastBackend, StubSlowBackend
from .config import Config
from .datagen import CorpusSpec
from .tools import SimulatorConfig, simulated_registry


def _load_pool(pool_arg: str | None, fallback_n: int, seed: int, side: tuple[int, int]):
    if pool_arg:
        return datagen.load_pool(pool_arg)
    print(f"note: no --pool given, using {fallback_n} synthetic clean images", file=sys.stderr)
    return datagen.synthetic_pool(fallback_n, seed=seed, side_range=side)


def datagen_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="datagen", description="instruction/prompt corpus builders")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("slow", "feedback", "prompts"):
        p = sub.add_parser(name)
        p.add_argument("--scale", type=float, default=0.01, help="fraction of the full corpus counts")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="corpus")
        p.add_argument("--pool", default=None, help="directory of clean PNG images")
    args = parser.parse_args(argv)

    if args.command == "prompts":
        records = datagen.build_prompt_corpus(seed=args.seed)
        path = datagen.write_prompt_corpus(records, args.out)
        print(f"wrote {len(records)} prompts to {path}")
        return 0

    spec = CorpusSpec(scale=args.scale, seed=args.seed, out_dir=args.out)
    provider = codecs.provider_from_config(Config(), use_stub_fallback=True)
    pool = _load_pool(args.pool, fallback_n=16, seed=args.seed, side=(256, 320))
    if args.command == "slow":
        records = datagen.build_slowagent_corpus(spec, pool, provider=provider)
        print(f"wrote {len(records)} records to {Path(args.out) / 'slowagent.jsonl'}")
    else:
        registry = simulated_registry(SimulatorConfig(), provider=provider)
        records = datagen.build_feedback_corpus(spec, pool, registry, provider=provider)
        print(f"wrote {len(records)} records to {Path(args.out) / 'feedback.jsonl'}")
    return 0


def bench_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="experiment protocols")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("testset", "fast-vs-slow", "success-rate", "single-vs-both"):
        p = sub.add_parser(name)
        p.add_argument("--backends", default="oracle", choices=["oracle", "stub"], help="agent backend profile")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="bench-out")
        p.add_argument("--pool", default=None, help="directory of clean PNG images")
        p.add_argument("--stub-p", type=float, default=0.6)
        p.add_argument("--n-per-kind", type=int, default=200)
        p.add_argument("--pool-side", type=int, default=96, help="synthetic pool image side")
    args = parser.parse_args(argv)

    provider = codecs.provider_from_config(Config(), use_stub_fallback=True)
    side = (args.pool_side, args.pool_side)
    registry = simulated_registry(SimulatorConfig(), provider=provider)

    if args.command == "testset":
        pool = _load_pool(args.pool, fallback_n=24, seed=args.seed, side=side)
        items = bench_mod.build_hybrid_testset(pool, seed=args.seed, out_dir=args.out, provider=provider)
        print(f"wrote {len(items)} testset pairs under {args.out}")
        return 0

    if args.command == "fast-vs-slow":
        pool = _load_pool(args.pool, fallback_n=24, seed=args.seed, side=side)
        prompts = datagen.build_prompt_corpus(seed=args.seed)
        report = bench_mod.run_fast_vs_slow(prompts, pool, registry, seed=args.seed, provider=provider)
    elif args.command == "success-rate":
        pool = _load_pool(args.pool, fallback_n=16, seed=args.seed, side=(64, 64))
        prompts = datagen.build_prompt_corpus(seed=args.seed)
        slow = OracleSlowBackend() if args.backends == "oracle" else StubSlowBackend(args.stub_p)
        report = bench_mod.run_success_rate(
            prompts, pool, slow, RuleFastBackend(), n_per_kind=args.n_per_kind, seed=args.seed, provider=provider
        )
    else:
        pool = _load_pool(args.pool, fallback_n=24, seed=args.seed, side=side)
        testset = bench_mod.build_hybrid_testset(pool, seed=args.seed, provider=provider)
        report = bench_mod.run_single_vs_both(testset, registry, seed=args.seed)

    path = report.save(args.out)
    print(f"wrote {path}")
    for key, value in report.summary.items():
        print(f"  {key}: {value}")
    return 0
