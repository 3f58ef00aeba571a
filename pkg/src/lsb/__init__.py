"""Skills learned one partition class at a time, each bootstrapping from its neighbours' values."""

from .driver import LsbConfig, LsbResult, LsbUpdateError, UpdateRecord, goal_first_order, min_iterations, run_lsb
from .envs import ENV_NAMES, make_env
from .harness import ConfigError, ExperimentConfig, baseline_fine_q, load_config, run_bench, run_experiment
from .learners import ActorCriticLearner, UcbRpsLearner, train_skill_actor_critic, ucb_rps_solve
from .mdp import EnvModel, TabularEnv, rollout, substream
from .partition import GridPartition, LabelPartition, make_grid_partition
from .policy_eval import BinaryGridFeatures, LstdEvaluator, NnEvaluator, lstd_evaluate
from .skill_mdp import SkillMdp, build_skill_mdp
from .skills import ActionFeatures, PolynomialFeatures, Skill, SkillPolicy, SkillSet

__version__ = "0.1.0"

__all__ = [
    "ActionFeatures", "ActorCriticLearner", "BinaryGridFeatures", "ConfigError", "ENV_NAMES", "EnvModel",
    "ExperimentConfig", "GridPartition", "LabelPartition", "LsbConfig", "LsbResult", "LsbUpdateError",
    "LstdEvaluator", "NnEvaluator", "PolynomialFeatures", "Skill", "SkillMdp", "SkillPolicy", "SkillSet",
    "TabularEnv", "UcbRpsLearner", "UpdateRecord", "baseline_fine_q", "build_skill_mdp", "goal_first_order",
    "load_config", "lstd_evaluate", "make_env", "make_grid_partition", "min_iterations", "rollout",
    "run_bench", "run_experiment", "run_lsb", "substream", "train_skill_actor_critic", "ucb_rps_solve",
]
