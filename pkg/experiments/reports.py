"""
CSV reports with a '#' comment header (manifest hash, seeds, library versions).
No timestamps are written, so a rerun of the same manifest gives identical bytes.
"""

from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd
import scipy

from utils.logger import setup_logger

logger = setup_logger(__name__)

REPORT_VERSION = "1"


def library_versions() -> Dict[str, str]:
    return {"numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}


def write_report(table: pd.DataFrame, path: Union[str, Path], header: Dict[str, object]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# report_version: {REPORT_VERSION}"]
    lines += [f"# {key}: {value}" for key, value in header.items()]
    lines += [f"# {name}: {version}" for name, version in library_versions().items()]
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
        table.to_csv(f, index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"Wrote {len(table)} rows to {path}")
    return path


def read_report(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_header(path: Union[str, Path]) -> Dict[str, str]:
    header = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            header[key] = value
    return header
