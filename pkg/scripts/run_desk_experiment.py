"""Desk-scale gMINT experiment over several seeds.

Trains the overfit MLP of ``DeskExperiment`` per seed, then reports MINT AUC for
gradient features at every size pair, embedding features at the largest pair,
and optionally the mixed protocol against a distinct external corpus.

    python scripts/run_desk_experiment.py --seeds 0 1 2 --selector last:3 --mixed
"""

import argparse
import json
import logging

import numpy as np

from gmint.auditor import AuditorConfig
from gmint.evaluation import DeskExperiment, SweepPlan, run_intra_protocol, run_mixed_protocol
from gmint.probe import LayerSelector


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--selector", default="last:3")
    ap.add_argument("--batch-size", type=int, default=64, help="auditor batch size")
    ap.add_argument("--mixed", action="store_true", help="also run the mixed protocol")
    ap.add_argument("--json", help="write per-seed results to this file")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    desk = DeskExperiment()
    sel, cfg = LayerSelector.parse(args.selector), AuditorConfig(batch_size=args.batch_size)
    large = desk.size_pairs[0]
    rows = []
    for seed in args.seeds:
        corpus = desk.make_corpus(seed)
        target = desk.make_target(seed, corpus)
        grad = run_intra_protocol(corpus, desk.model, sel, "gradient", SweepPlan(list(desk.size_pairs)),
                                  seed=seed, auditor_config=cfg, target=target)
        emb = run_intra_protocol(corpus, desk.model, sel, "embedding", SweepPlan([large]),
                                 seed=seed, auditor_config=cfg, target=target)
        row = {"seed": seed, "train_accuracy": target.train_accuracy, "test_accuracy": target.test_accuracy,
               "embedding": emb.auc_at(large)}
        row.update({f"gradient{pair}": grad.auc_at(pair) for pair in desk.size_pairs})
        if args.mixed:
            mixed = run_mixed_protocol(corpus, [desk.external_corpus(seed)], desk.model, sel, "gradient",
                                       SweepPlan([large]), seed=seed, auditor_config=cfg, target=target)
            row["mixed"] = mixed.auc_at(large)
        print(json.dumps(row))
        rows.append(row)

    keys = [k for k in rows[0] if k != "seed"]
    print("mean:", json.dumps({k: round(float(np.mean([r[k] for r in rows])), 4) for k in keys}))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
