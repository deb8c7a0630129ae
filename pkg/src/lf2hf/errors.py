"""Exception types shared by every module.

Each error carries a short machine-readable ``code`` (e.g. ``"empty-mask"``)
and the module that raised it, so the CLI can report ``module:code`` and pick
an exit status without string matching.
"""


class Lf2hfError(Exception):
    module = "core"
    exit_code = 3

    def __init__(self, code, message=""):
        self.code = code
        self.message = message or code
        super().__init__(f"{self.module}:{code}: {self.message}")

    @property
    def qualified_code(self):
        return f"{self.module}:{self.code}"


class ImageError(Lf2hfError):
    module = "image"


class DimensionError(Lf2hfError, ValueError):
    module = "image"
    exit_code = 2

    def __init__(self, message=""):
        super().__init__("dimension-mismatch", message)


class PhysicsError(Lf2hfError):
    module = "physics"


class SolverError(Lf2hfError):
    module = "solver"


class MetricsError(Lf2hfError):
    module = "metrics"


class PhantomError(Lf2hfError):
    module = "phantom"
    exit_code = 2


class FormatError(Lf2hfError):
    module = "io"
    exit_code = 2


class ConfigError(Lf2hfError):
    module = "config"
    exit_code = 2
