import logging

from fastapi import APIRouter, HTTPException

from app.services.activity.activity_engine import validate_model
from app.services.activity.schemas import PwaModel
from app.services.intervention.engine.mpc_engine import compute_goal, initial_state, mpc_step
from app.services.intervention.schemas.intervention_schemas import (
    GoalRequest,
    GoalResponse,
    StepRequest,
    StepResponse,
    ValidateResponse,
)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/mpc", tags=["MPC"])


@router.post("/validate", response_model=ValidateResponse)
def mpc_validate(payload: PwaModel):
    problems = validate_model(payload)
    return ValidateResponse(valid=not problems, violations=problems)


@router.post("/goal", response_model=GoalResponse)
def mpc_goal(payload: GoalRequest):
    try:
        return GoalResponse(goal=compute_goal(payload.daily_window_totals, payload.increment))
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


@router.post("/step", response_model=StepResponse)
def mpc_decide(payload: StepRequest):
    config = payload.config
    problems = validate_model(config.model)
    if problems:
        raise HTTPException(status_code=400, detail={"violations": problems})
    try:
        state = payload.state or initial_state(config)
        result = mpc_step(config, state, payload.measurement)
    except ValueError as e:
        logger.warning("Step request rejected: %s", e)
        raise HTTPException(status_code=400, detail=str(e))
    return StepResponse(
        step=result.step,
        decision=result.decision,
        probability=result.probability,
        baseline_probability=result.baseline_probability,
        planned_tail=result.planned_tail,
        satisfied_count=result.solution.satisfied_count,
        scenario_count=result.solution.scenario_count,
        node_count=result.solution.node_count,
        state=result.state,
    )
