from __future__ import annotations

import sys
from pathlib import Path
from typing import Union

########################################################################
# GLOBAL VARIABLES


verbose = True

Point = tuple[float, float]
PathLike = Union[str, Path]


########################################################################
# ROOT EXCEPTION


class CPDSError(Exception):
    """Base class for all errors raised by `cpds_dad`."""


class PreconditionError(CPDSError):
    """A function was called with inputs outside its supported domain."""


class ScenarioCapError(CPDSError):
    """An enumeration grew past its configured cap."""


########################################################################
# VERBOSITY SENSITIVE VERSIONS OF COMMON FUNCTIONS


def vprint(*args, **kwargs):
    if verbose:
        kwargs.setdefault("file", sys.stderr)
        print(*args, **kwargs)


def vwritetext(path: Path, text: str, *args, **kwargs):
    vprint(f"+ WRITE {path}")
    text = text.strip() + "\n"
    path.write_text(text, *args, **kwargs)


def fmt_ids(ids) -> str:
    # {'L1-2', 'L2-3'} -> 'L1-2+L2-3'; empty -> '-'.
    return "+".join(sorted(ids)) or "-"
