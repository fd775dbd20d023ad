"""Optional full-scale check: align real fastText embeddings and compare P@1.

Needs the embedding files and a test dictionary locally (nothing is
downloaded). Takes tens of CPU-minutes per language pair.

    python scripts/reproduce_full_scale.py --src wiki.en.vec --tgt wiki.es.vec \
        --dict en-es.test.txt --expected REF --lambda 1e-5

Exits 0 when the best P@1 (in percentage points) is within --tolerance of
--expected, and 1 otherwise.
"""
import argparse
import json
import sys

from gwalign import GwConfig, align, load_embeddings, load_lexicon


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--src", required=True)
    ap.add_argument("--tgt", required=True)
    ap.add_argument("--dict", required=True)
    ap.add_argument("--expected", type=float, required=True, help="reference P@1 in points")
    ap.add_argument("--tolerance", type=float, default=2.0)
    ap.add_argument("--lambda", dest="lam", type=float, default=1e-5)
    ap.add_argument("--normalize", choices=["mean", "median", "max"])
    ap.add_argument("--gw-vocab", type=int, default=20000)
    ap.add_argument("--max-vocab", type=int, default=200000)
    args = ap.parse_args(argv)

    src = load_embeddings(args.src, max_vocab=args.max_vocab)
    tgt = load_embeddings(args.tgt, max_vocab=args.max_vocab)
    run = align(src, tgt, gw_vocab=args.gw_vocab, normalize=args.normalize,
                cfg=GwConfig.with_lambda(args.lam), lexicon=load_lexicon(args.dict))
    per_method = {m.value: 100 * ev.p_at_k for (m, k), ev in run.metrics.items() if k == 1}
    best = max(per_method.values())
    ok = abs(best - args.expected) <= args.tolerance
    print(json.dumps({"p_at_1": per_method, "best": best, "expected": args.expected,
                      "tolerance": args.tolerance, "within_tolerance": ok}, indent=2))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
