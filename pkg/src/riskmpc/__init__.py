"""Risk-aware MPC motion planning with a learned lane-change predictor."""

from .dynamics import (BicycleParams, ControlInput, LinearModel, VehicleState,
                       continuous_dynamics, linearize, step_affine, step_truth)
from .lanegen import LaneChangeGeometry, LanePath, build_corpus, build_path, cubic_lane_change
from .dataset import (SplitDataset, TrajectoryWindow, calibrate, load_dataset,
                      save_dataset, segment_path, split_and_shuffle)
from .neuralnet import (AdamState, ModelParams, TrainConfig, adam_update,
                        evaluate, gru_forward, init_model, layer_norm,
                        load_weights, loss_gradients, model_forward, mse_loss,
                        rmse, save_weights, train)
from .qpsolver import QpSolution, QuadraticProgram, kkt_residual, solve_qp
from .mpc import (OcpConfig, OcpSolution, ReferenceTrajectory, SafetyEllipse,
                  TvPrediction, assemble_qp, build_reference, ellipse_margin,
                  solve_ocp, tv_policy)
from .simulator import (HistoryBuffer, SimConfig, SimLog, cold_start_history,
                        prediction_adapter, prediction_consistency,
                        run_closed_loop, tv_lane_reference)

__version__ = "0.1.0"
