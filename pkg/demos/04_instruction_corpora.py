"""Build desk-scale instruction-tuning corpora and the 220-prompt corpus.

Counts scale linearly from the full layout (70k identification pairs, 63k
feedback pairs); emitted text is byte-exact against the agent templates and
every image embeds its degradation provenance for label auditing.

Run:  python demos/04_instruction_corpora.py [out_dir]
"""

import collections
import sys
from pathlib import Path

from restokit import codecs
from restokit.datagen import (
    CorpusSpec,
    audit_records,
    build_feedback_corpus,
    build_prompt_corpus,
    build_slowagent_corpus,
    synthetic_pool,
    write_prompt_corpus,
)
from restokit.tools import simulated_registry

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out/corpus")
spec = CorpusSpec(scale=0.002, seed=42, out_dir=str(out))
pool = synthetic_pool(8, seed=6, side_range=(240, 280))
provider = codecs.provider_from_config(use_stub_fallback=True)

print(f"building corpora at scale={spec.scale} under {out}/ ...")
slow = build_slowagent_corpus(spec, pool, provider=provider)
feedback = build_feedback_corpus(spec, pool, simulated_registry(provider=provider), provider=provider)
prompts = build_prompt_corpus(seed=42)
write_prompt_corpus(prompts, out)

print(f"\nidentification corpus: {len(slow)} records")
for cat, n in sorted(collections.Counter(r.category.split('/')[0] for r in slow).items()):
    print(f"  {cat:10s} {n}")
print(f"feedback corpus: {len(feedback)} records "
      f"({sum(r.assistant_text.startswith('[Assistant: Yes') for r in feedback)} clean / "
      f"{sum(r.assistant_text.startswith('[Assistant: No') for r in feedback)} not clean)")
print(f"prompt corpus: {len(prompts)} ({sum(p.label == 'ambiguous' for p in prompts)} ambiguous)")

print("\ntemplate audit:", "all byte-exact" if not (audit_records(slow, "slow") + audit_records(feedback, "feedback")) else "VIOLATIONS")

print("\nsample records:")
print(" ", slow[0].user_text)
print(" ", slow[0].assistant_text)
fb = next(r for r in feedback if r.category == "clean_hybrid_tool")
print(" ", fb.user_text)
print(" ", fb.assistant_text)
