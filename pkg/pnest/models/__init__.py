from .dynamics import (
    FAMILY_MAP,
    ConstantThreshold,
    CyclicThreshold,
    Dimensions,
    SystemModel,
    ThresholdPolicy,
    alpha_bound,
    eval_h,
    eval_jacobian,
    make_binary_probit,
    make_linear,
    make_rnn_sigmoid,
    pack_params,
    unpack_params,
)
from .checks import (
    Assumption4Report,
    assumption4_terms,
    check_assumption4,
    check_gradient_lipschitz,
    check_jacobian_fd,
)
