from .evaluate import METHODS, MetricReport, evaluate
from .quality import discrete_entropy, histogram_equalize
from .tmqi import TMQIResult, tmqi

__all__ = [
    "METHODS",
    "MetricReport",
    "TMQIResult",
    "discrete_entropy",
    "evaluate",
    "histogram_equalize",
    "tmqi",
]
