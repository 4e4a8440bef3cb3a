"""Random forests with horosphere splits for data in the Poincare ball."""

from .data import (
    CvPlan,
    Dataset,
    SyntheticTreeSpec,
    generate_synthetic_tree,
    load_csv,
    save_csv,
    stratified_kfold,
    subtree_nodes,
    tree_node_count,
)
from .forest import (
    ForestModel,
    ForestParams,
    fit_forest,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_forest,
    predict_matrix,
    predict_proba_forest,
    predict_proba_matrix,
    save_model,
)
from .geometry import (
    BALL_EPS,
    ClassMean,
    IdealPoint,
    KleinPoint,
    PoincarePoint,
    busemann,
    busemann_inv,
    clip_to_ball,
    einstein_midpoint,
    klein_to_poincare,
    lca_similarity,
    merge_class_means,
    poincare_distance,
    poincare_to_klein,
    unit_vector,
)
from .metrics import aupr, macro_f1, micro_f1
from .splitter import (
    GAIN_MIN,
    MU_MIN,
    BinaryProblem,
    ConvergenceFailure,
    Horosphere,
    SplitCandidate,
    SplitterConfig,
    SplitterSolution,
    axis_aligned_split,
    best_split,
    build_binary_problems,
    fit_splitter,
    gini,
    hinge_loss,
    hinge_loss_grad,
    information_gain,
    random_ideal_split,
    solution_to_horosphere,
)
from .tree import (
    InternalNode,
    LeafNode,
    TreeParams,
    fit_tree,
    predict_tree,
    tree_depth,
    tree_from_dict,
    tree_leaf_count,
    tree_to_dict,
)

__version__ = "0.1.0"
