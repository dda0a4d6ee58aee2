from .fourrooms import (
    CLASSIC_GRID,
    ConfigError,
    CorruptedStateError,
    FourRooms,
    FourRoomsConfig,
    NoPathError,
    StepOutcome,
    fourrooms_from_dict,
    fourrooms_set_goal,
    fourrooms_to_dict,
    fourrooms_step,
    load_fourrooms,
    optimal_steps,
)
from .pinball import (
    Pinball,
    PinballConfig,
    fourier_features,
    normalize_state,
    pinball_from_dict,
    pinball_load,
    pinball_save,
    pinball_step,
    pinball_to_dict,
)
