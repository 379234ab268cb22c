"""Diversity-driven augmentation policy search for domain-generalized
segmentation, at desk scale on a synthetic multi-domain benchmark."""

from .bench import (
    DomainSpec,
    LabeledSample,
    accuracy,
    auc_roc,
    default_domain_specs,
    dice,
    generate_domain,
    leave_one_domain_out,
)
from .controller import Controller, SampleTrace, normalize_rewards
from .nets import (
    DomainClassifier,
    SegModel,
    TrainBatch,
    adam_step,
    domain_embed_and_loss,
    encode,
    grad_check,
    seg_loss,
)
from .ot import EmbeddingBatch, cosine_cost, diversity_loss, exact_ot, sinkhorn
from .rng import SplitMix64, stream_for_item
from .search import (
    ConfigError,
    RunReport,
    SearchConfig,
    run_baseline,
    run_radg,
    run_search,
    run_with_forced_policies,
    update_running_reward,
)
from .transforms import (
    Image,
    OpKind,
    Operation,
    Policy,
    PolicySchemaError,
    SubPolicy,
    apply_op,
    apply_policy,
    apply_subpolicy,
    identity_policy,
    load_policy,
    magnitude_value,
    policy_from_dict,
    policy_to_dict,
    save_policy,
    search_space_size,
)

__version__ = "0.1.0"
