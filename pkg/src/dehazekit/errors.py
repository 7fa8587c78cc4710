"""Exception types shared across the toolkit."""


class DehazeKitError(Exception):
    """Base class for every error raised by dehazekit."""


class ShapeError(DehazeKitError, ValueError):
    pass


class NumericError(DehazeKitError, ArithmeticError):
    pass


class GradCheckError(DehazeKitError):
    def __init__(self, report):
        self.report = report
        worst = report.worst[:5]
        detail = ", ".join(f"{w.name}{list(w.index)} rel={w.rel_error:.3g}" for w in worst)
        super().__init__(f"gradient check failed (tol={report.tol:g}): {detail}")


class TrainingError(DehazeKitError):
    def __init__(self, step, message):
        self.step = step
        super().__init__(f"step {step}: {message}")


class ImageIOError(DehazeKitError, OSError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class FormatError(DehazeKitError, ValueError):
    pass


class GeoRangeError(DehazeKitError, ValueError):
    pass


class DegenerateClusterError(DehazeKitError, ValueError):
    pass
