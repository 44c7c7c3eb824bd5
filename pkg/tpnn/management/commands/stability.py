import json
import logging
import time
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand

from tpnn.data import kfold_split, load_csv
from tpnn.inference import component_draws, stability_by_order, stability_score, visited_sets
from tpnn.mcmc import run_chains
from tpnn.schemas import ChainConfig, load_run_config
from tpnn.serialization import build_manifest, write_manifest

from ._common import manifest_path_for, translate_errors, usage_error

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Fit one posterior per fold and score how stable every component estimate is across folds."

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True)
        parser.add_argument("--data", required=True)
        parser.add_argument("--out", required=True, help="stability report JSON")
        parser.add_argument("--folds", type=int, default=5)
        parser.add_argument("--seed", type=int, help="overrides the config seed")
        parser.add_argument("--max-order", type=int, default=3)
        parser.add_argument("--target", default="y")
        parser.add_argument("--family", default="gaussian", choices=["gaussian", "bernoulli", "poisson"])

    def handle(self, *args, **options):
        with translate_errors():
            started = time.perf_counter()
            if options["folds"] < 2:
                raise usage_error("--folds must be at least 2")
            prior, chain = load_run_config(options["config"])
            if options.get("seed") is not None:
                chain = ChainConfig(**{**chain.model_dump(), "seed": options["seed"]})
            ds = load_csv(options["data"], options["target"], options["family"])

            fits = []
            for fold, (train, _) in enumerate(kfold_split(ds, options["folds"], chain.seed)):
                logger.info("fold %d/%d: fitting on %d rows", fold + 1, options["folds"], train.n)
                samples, _ = run_chains(train, prior, chain, workers=settings.TPNN_WORKERS)
                if not samples.states:
                    raise usage_error("a fold kept no posterior states; increase iterations")
                # every fold evaluates on all rows through its own rank transform
                fits.append((samples, train.preprocessor.transform(ds.raw)))

            keys = sorted(
                {key for samples, _ in fits for key in visited_sets(samples) if len(key) <= options["max_order"]},
                key=lambda key: (len(key), key),
            )
            scores = {}
            for key in keys:
                estimates = np.vstack([
                    component_draws(samples, key, rows).mean(axis=0) for samples, rows in fits
                ])
                try:
                    scores[key] = stability_score(estimates)
                except ValueError:
                    logger.debug("component %s is zero on every row; skipped", key)

            report = {
                "folds": options["folds"],
                "index_base": 1,
                "components": [
                    {"set": [j + 1 for j in key], "stability": score} for key, score in scores.items()
                ],
                "aggregate": {
                    str(d): stability_by_order(scores, d, ds.p) for d in range(1, options["max_order"] + 1)
                },
            }
            out = Path(options["out"])
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
            manifest = build_manifest(
                "stability",
                options={k: options.get(k) for k in ("config", "data", "out", "folds", "seed", "max_order",
                                                      "target", "family")},
                outputs={"report": str(out)},
                duration_seconds=time.perf_counter() - started,
                config_path=options["config"],
                dataset=ds.fingerprint(),
                seed=chain.seed,
            )
            write_manifest(manifest, manifest_path_for(options["out"]))
            self.stdout.write(f"stability report written to {out}")
