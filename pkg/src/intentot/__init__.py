"""Intent-space optimal transport reward relabeling for offline imitation.

Pipeline: learn tabular intent embeddings from reward-free trajectories,
align agent trajectories to expert demonstrations with entropic OT in
intent space, relabel the agent dataset with dense rewards, and train a
tabular IQL policy on the result.
"""

from .data import (Dataset, DatasetMeta, Trajectory, load_dataset,
                   save_dataset, select_expert_trajectories, strip_labels)
from .envs import ChainMDP, GridWorld, expert_policy, parse_grid_file, rollout
from .intents import (IntentModel, IntentTrainConfig, embed,
                      icvf_loss_and_grads, load_intent_model, sample_batch,
                      save_intent_model, temporal_linearity_report,
                      train_intents, value, value_bound_report)
from .iql import IqlConfig, IqlTables, evaluate, iql_train
from .ot import (CostMatrix, TransportPlan, build_cost_matrix,
                 exact_ot_bruteforce, sinkhorn, tail_index, transport_cost)
from .policy import Policy, load_policy, save_policy
from .relabel import (RelabelConfig, RelabeledDataset, relabel_dataset,
                      relabel_pair, rescale_rewards, reward_from_plan)

__version__ = "0.1.0"
