"""Sampled-system predictive agents: MPC, stacked RL-Q, RL-QV and RL-Q° with
theorem oracles and a grid benchmark."""

from stackrl.actor import ActionStack, ObjectiveSpec, optimize_stack, warm_start_shift
from stackrl.agents import AgentConfig, EpisodeTrace, agent_step, run_episode
from stackrl.costs import DiscountSpec, StageCost, accumulate_episode, running_cost, stage_integral
from stackrl.critics import CriticWeights, ReplayBuffer, Transition, critic_update, phi_q, phi_v
from stackrl.dynamics import (
    Dynamics,
    IntegrationDiverged,
    PredictionDiverged,
    SampledTrajectory,
    euler_predict,
    integrate_step,
    predict_horizon,
    rollout_sampled,
)
from stackrl.envs import ChainMdp, LqrEnv, care_solve, chain_fixture, make_env, robot_dynamics

__all__ = [
    "ActionStack",
    "AgentConfig",
    "ChainMdp",
    "CriticWeights",
    "DiscountSpec",
    "Dynamics",
    "EpisodeTrace",
    "IntegrationDiverged",
    "LqrEnv",
    "ObjectiveSpec",
    "PredictionDiverged",
    "ReplayBuffer",
    "SampledTrajectory",
    "StageCost",
    "Transition",
    "accumulate_episode",
    "agent_step",
    "care_solve",
    "chain_fixture",
    "critic_update",
    "euler_predict",
    "integrate_step",
    "make_env",
    "optimize_stack",
    "phi_q",
    "phi_v",
    "predict_horizon",
    "robot_dynamics",
    "rollout_sampled",
    "run_episode",
    "running_cost",
    "stage_integral",
    "warm_start_shift",
]
