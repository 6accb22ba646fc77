"""Layered polytree belief networks: construction and exact inference."""

from .builder import (
    Cycle,
    ReducedPolytree,
    add_arc,
    add_node,
    build,
    cluster_cpt,
    cluster_partition,
    find_cycle,
    layer_cluster,
)
from .errors import (
    BackArcError,
    CapacityError,
    CyclicNetworkError,
    DisconnectedNetworkError,
    FormatError,
    InconsistentEvidenceError,
    LayeredBnError,
    ScriptError,
    StructuralError,
)
from .inference import (
    MessageState,
    PseudoRoot,
    belief,
    incorporate_new_node,
    marginalize_cluster,
    propagate,
    retract_evidence,
    set_evidence,
)
from .layering import (
    ArcAdmissibility,
    LayeredNetwork,
    Verdict,
    check_arc_addition,
    compute_levels,
    is_layered,
    layerize,
)
from .model import (
    Cpt,
    Network,
    NetworkStats,
    NodeKind,
    ValidationReport,
    Variable,
    cpt_index,
    decode_cpt_index,
    identity_cpt,
    network_stats,
    validate_network,
)
from .oracle import OracleResult, d_separated, joint_enumerate

__version__ = "0.1.0"
