"""Privacy-preserving logistic regression over partitioned data.

The top level re-exports the pieces most callers need: dataset handling,
the plain and protocol trainers, the two security settings, and the
reporting helpers the command line and the HTTP service are built on.
"""

from mpclogreg.data import (
    DATASETS,
    Dataset,
    Scaler,
    dataset_path,
    gen_synthetic,
    load_csv,
    load_named,
    partition_horizontal,
    split_train_test,
    standardize,
)
from mpclogreg.errors import DataError, ProtocolError, UsageError
from mpclogreg.logreg import ModelParams, TrainConfig, train_plain, train_shared
from mpclogreg.mpc import BEAVER_2P, RESHARE_3P, SecuritySetting
from mpclogreg.reports import (
    PROTOCOL_CHOICES,
    comm_report,
    evaluate_model,
    reproduce_coefficients,
    reproduce_metrics,
    run_bench,
    train_protocol,
    training_report,
)

__version__ = "0.1.0"

__all__ = [
    "BEAVER_2P",
    "DATASETS",
    "DataError",
    "Dataset",
    "ModelParams",
    "PROTOCOL_CHOICES",
    "ProtocolError",
    "RESHARE_3P",
    "Scaler",
    "SecuritySetting",
    "TrainConfig",
    "UsageError",
    "__version__",
    "comm_report",
    "dataset_path",
    "evaluate_model",
    "gen_synthetic",
    "load_csv",
    "load_named",
    "partition_horizontal",
    "reproduce_coefficients",
    "reproduce_metrics",
    "run_bench",
    "split_train_test",
    "standardize",
    "train_plain",
    "train_protocol",
    "train_shared",
    "training_report",
]
