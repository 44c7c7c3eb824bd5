import time

import pandas as pd
from django.core.management.base import BaseCommand

from tpnn.inference import importance_scores, rank_importance
from tpnn.serialization import build_manifest, write_manifest

from ._common import format_set, load_samples_and_rows, manifest_path_for, translate_errors, usage_error, write_table


class Command(BaseCommand):
    help = "Rank the visited components by the empirical L2 norm of their Bayes estimate."

    def add_arguments(self, parser):
        parser.add_argument("--samples", required=True)
        parser.add_argument("--data", required=True, help="rows the norms are taken over (the training CSV)")
        parser.add_argument("--top", type=int, help="keep the N highest-scoring components")
        parser.add_argument("--normalize", action="store_true", help="divide by the largest score")
        parser.add_argument("--per-sample", action="store_true", help="average per-state norms instead")
        parser.add_argument("--out", help="importance CSV; stdout when omitted")

    def handle(self, *args, **options):
        with translate_errors():
            started = time.perf_counter()
            if options.get("top") is not None and options["top"] < 1:
                raise usage_error("--top must be positive")
            samples, x, _ = load_samples_and_rows(options["samples"], options["data"])
            scores = importance_scores(
                samples, x, normalize=options["normalize"], per_sample=options["per_sample"]
            )
            ranked = rank_importance(scores)
            if options.get("top"):
                ranked = ranked[:options["top"]]
            frame = pd.DataFrame(
                {
                    "rank": range(1, len(ranked) + 1),
                    "set": [format_set(key) for key, _ in ranked],
                    "order": [len(key) for key, _ in ranked],
                    "score": [score for _, score in ranked],
                },
                columns=["rank", "set", "order", "score"],
            )
            write_table(frame, options.get("out"), self.stdout)

            if options.get("out"):
                manifest = build_manifest(
                    "importance",
                    options={k: options.get(k) for k in ("samples", "data", "top", "normalize", "per_sample", "out")},
                    outputs={"importance": options["out"]},
                    duration_seconds=time.perf_counter() - started,
                    dataset={"rows": int(x.shape[0]), "columns": int(x.shape[1])},
                    seed=samples.meta.get("seed"),
                )
                write_manifest(manifest, manifest_path_for(options["out"]))
