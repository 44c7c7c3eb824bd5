import json
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from tpnn.bench import export, generate, run_bench
from tpnn.schemas import load_bench_spec
from tpnn.serialization import build_manifest, write_manifest

from ._common import manifest_path_for, translate_errors


class Command(BaseCommand):
    help = "Generate a synthetic dataset, fit it and report component selection and predictive metrics."

    def add_arguments(self, parser):
        parser.add_argument("--spec", required=True, help="bench spec JSON")
        parser.add_argument("--out", required=True, help="report JSON")
        parser.add_argument("--export", help="also write the generated data to this CSV (plus a .truth.json)")

    def handle(self, *args, **options):
        with translate_errors():
            started = time.perf_counter()
            spec = load_bench_spec(options["spec"])
            outputs = {"report": options["out"]}
            if options.get("export"):
                sidecar = export(generate(spec.data), spec.data, options["export"])
                outputs.update({"data": options["export"], "truth": str(sidecar)})

            report = run_bench(spec, crps_draws=settings.TPNN_CRPS_DRAWS)
            out = Path(options["out"])
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")

            manifest = build_manifest(
                "bench",
                options={k: options.get(k) for k in ("spec", "out", "export")},
                outputs=outputs,
                duration_seconds=time.perf_counter() - started,
                config_path=options["spec"],
                dataset={"function_id": spec.data.function_id, "n": spec.data.n, "p": spec.data.p},
                seed=spec.data.seed,
            )
            write_manifest(manifest, manifest_path_for(options["out"]))
            self.stdout.write(f"report written to {out}")
