from . import core
from . import inference
from . import em
from . import search
from . import report
from . import joint
from . import rules
from . import io

from .core import Variable, Latent, Observed, LatentTreeModel, DataSet
from .core import DataError, ModelFormatError, InvalidModelError
from .core import NumericalError, DataWarning, ConvergenceWarning
from .core import validate, check_model, dimension, reroot, marginal
from .core import random_parameters, forward_sample
from .inference import posterior, edge_posterior, dataset_loglik
from .em import EmConfig, FitResult, fit_em, fit_lca, bic, bic_score
from .search import SearchConfig, SearchResult
from .report import build_report, model_report, mutual_info, pattern_type
from .joint import FeatureGroup, FeatureGroupSpec, ClassSummary
from .joint import fit_joint, merge_summary, cic_table, joint_report
from .rules import ClassificationRule, derive_rule, apply_rule
from .rules import simplify_sweep, integerize, rule_accuracy
from .io import load_model, save_model, parse_dataset, write_dataset

__version__ = (0, 1, 0)
