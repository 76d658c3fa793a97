import os
import sys
from contextlib import contextmanager
from pathlib import Path
from tempfile import TemporaryDirectory

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from cpds_dad import _utils  # noqa: E402

if not __debug__:
    _utils.verbose = False

pwd_abs = Path(os.curdir).absolute()

SLOW_TESTS = bool(os.environ.get("CPDS_SLOW_TESTS"))
SLOW_REASON = "set `CPDS_SLOW_TESTS` to run acceptance-scale tests"


@contextmanager
def inside_temp_dir():
    temp_dir = TemporaryDirectory()
    try:
        os.chdir(temp_dir.name)
        yield temp_dir.name
    finally:
        os.chdir(pwd_abs)
        temp_dir.cleanup()
