"""Gibbs-posterior hypothesis sampling with computable risk certificates."""

from .bounds import (
    Certificate,
    CertificateInput,
    bound_catoni,
    bound_cor4,
    bound_cor5,
    bound_eq8,
    bound_eq9,
    catoni_inf,
    lee_delta_prime,
)
from .data import (
    BlobsSpec,
    Dataset,
    DataSplit,
    RunRecord,
    load_idx,
    load_idx_dataset,
    load_records,
    make_synthetic,
    persist_records,
    split_dataset,
)
from .estimators import GapRegressor, GibbsNetClassifier
from .klcalc import KlInversionConfig, kl, kl_inv_upper, pinsker_gap
from .measures import (
    GibbsObjective,
    MuFamily,
    MuSpec,
    NormKind,
    OmegaFamily,
    OmegaSpec,
    mu_gradient,
    mu_value,
    norm_gradient,
    norm_value,
    omega_value,
)
from .model import (
    Architecture,
    LossKind,
    ParamVector,
    empirical_risk,
    forward,
    forward_squared_allones,
    grad,
    init_params,
    loss,
    predict_proba,
    rescale_layer_pair,
)
from .neural import (
    GapBuilderConfig,
    GapDatasetEntry,
    GapPredictorModel,
    PredictorConfig,
    build_gap_dataset,
    load_gap_dataset,
    load_predictor,
    merged_bin_ids,
    predict_gap,
    rebalance_bins,
    save_gap_dataset,
    save_predictor,
    train_predictor,
)
from .sampler import (
    AdamState,
    AutotuneError,
    QuadraticObjective,
    SgldConfig,
    adam_step,
    lr_autotune,
    sgd_run,
    sgld_run,
    sgld_step,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
