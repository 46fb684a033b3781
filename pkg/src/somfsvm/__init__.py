"""Two-stage price forecasting: a SOM partitions feature space and each
partition gets a Gaussian fuzzy rule base read off a normalized-kernel SVR."""

from .data import (
    FeatureDataset,
    PriceSeries,
    build_features,
    parse_feature_csv,
    parse_price_csv,
    read_feature_csv,
    read_price_csv,
)
from .errors import (
    ContractError,
    ConvergenceError,
    DataError,
    FormatError,
    ModelCorruptError,
    ModelFileError,
    ModelVersionError,
    ParameterError,
    SomFsvmError,
    TrainingError,
)
from .evaluation import MetricReport, ds, mae, nmse, report
from .fuzzy import RefineConfig, RuleSet, export_rules, extract_rules, infer, refine_rules
from .pipeline import (
    PipelineConfig,
    TwoStageModel,
    evaluate,
    load_config,
    load_model,
    predict,
    predict_many,
    run_experiment,
    save_model,
    train_two_stage,
)
from .som import SomConfig, SomMap
from .svr import SvrConfig, SvrModel, predict_svr, train_svr

__version__ = "0.1.0"
