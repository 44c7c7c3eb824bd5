import time

import numpy as np
import pandas as pd
from django.core.management.base import BaseCommand

from tpnn.inference import predictive_point, predictive_quantiles
from tpnn.serialization import build_manifest, write_manifest

from ._common import load_samples_and_rows, manifest_path_for, translate_errors, write_table


class Command(BaseCommand):
    help = "Bayes-estimate predictions for every row of a CSV."

    def add_arguments(self, parser):
        parser.add_argument("--samples", required=True)
        parser.add_argument("--data", required=True)
        parser.add_argument("--out", help="predictions CSV; stdout when omitted")

    def handle(self, *args, **options):
        with translate_errors():
            started = time.perf_counter()
            samples, x, y = load_samples_and_rows(options["samples"], options["data"])
            frame = pd.DataFrame({"row": np.arange(1, x.shape[0] + 1)})
            point = predictive_point(samples, x)
            if samples.family == "gaussian":
                frame["prediction"] = point
                bands = predictive_quantiles(samples, x)
                frame["lower_2.5"] = bands[:, 0]
                frame["upper_97.5"] = bands[:, 1]
            elif samples.family == "bernoulli":
                frame["prediction"] = (point >= 0.5).astype(int)
                frame["probability"] = point
                frame["confidence"] = np.maximum(point, 1.0 - point)
            else:
                frame["prediction"] = point
            if y is not None:
                frame["observed"] = y
            write_table(frame, options.get("out"), self.stdout)

            if options.get("out"):
                manifest = build_manifest(
                    "predict",
                    options={k: options.get(k) for k in ("samples", "data", "out")},
                    outputs={"predictions": options["out"]},
                    duration_seconds=time.perf_counter() - started,
                    dataset={"rows": int(x.shape[0]), "columns": int(x.shape[1])},
                    seed=samples.meta.get("seed"),
                )
                write_manifest(manifest, manifest_path_for(options["out"]))
