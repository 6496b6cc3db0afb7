"""Downstream check: re-register with predicted parameters via the primary CLI.

The registration engine is consumed strictly through its command-line
interface and file formats; nothing here imports it.
"""

from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path


class PrimaryMissingError(RuntimeError):
    pass


def evaluate_downstream(corpus_dir, predictions_csv, out_dir, registry_cmd="flowreg"):
    """Invoke the registration engine's evaluate subcommand and annotate its report.

    Returns the report dict.  Raises PrimaryMissingError when the engine
    binary is not on PATH.
    """
    exe = shutil.which(registry_cmd)
    if exe is None:
        raise PrimaryMissingError(
            f"registration engine '{registry_cmd}' not found on PATH; install the "
            "primary package or pass registry_cmd explicitly"
        )
    out_dir = Path(out_dir)
    proc = subprocess.run(
        [exe, "evaluate", "--corpus", str(corpus_dir), "--predictions",
         str(predictions_csv), "--out", str(out_dir)],
        capture_output=True, text=True,
    )
    if proc.returncode != 0:
        raise RuntimeError(
            f"evaluate failed with exit code {proc.returncode}: {proc.stderr.strip()}"
        )
    report_path = out_dir / "report.json"
    report = json.loads(report_path.read_text())
    # the image-error target is a desk-scale relaxation of the reference
    # protocol's noise-free error level; record that next to the numbers
    report["notes"] = (
        "mean deformed-image error target 1e-3 (relaxed from the reference "
        "1e-5-level 3D results, which are not reproducible at this scale)"
    )
    report["image_error_target"] = 1e-3
    report["image_error_met"] = bool(report["image_mean_error"]["mean"] <= 1e-3)
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    return report
