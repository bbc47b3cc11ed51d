"""Application service layer exports."""

from duplex_engine.services.eval_service import EvalResult, evaluate, run_suite  # noqa: F401
from duplex_engine.services.suite_service import GenerateResult, generate_to_dir  # noqa: F401
from duplex_engine.services.training_service import TrainResult, train_preference, train_sft  # noqa: F401
