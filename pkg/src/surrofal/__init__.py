"""Falsification testing of dynamical models, optionally accelerated by surrogates."""
from .signals import (
    ControlPoints,
    InputChannelSpec,
    InputProfile,
    Interp,
    InterpolationKind,
    SampledSignal,
    SignalError,
    SignalSet,
    TimeDomain,
    TimePolicy,
    generate_control_points,
    interpolate,
    read_csv,
    resample,
    write_csv,
)
from .stl import HorizonError, StlSyntaxError, parse_stl, robustness, satisfied, test_objective
from .models import CostWrapper, DivergenceError, ExecutableModel, FunctionModel, OdeModel, rk4_integrate
from .benchmarks import BENCHMARKS, Benchmark, get_benchmark
from .search import (
    CandidateTest,
    FalsificationConfig,
    FalsificationResult,
    HillClimbRestart,
    SimulatedAnnealing,
    UniformRandom,
    falsify,
    generate,
    search_step,
)
from .sysid import (
    Armax,
    Arx,
    Bj,
    StateSpace,
    SurrogateModel,
    TrainingData,
    fit,
    mse,
    refine,
    simulate,
)
from .surrogate import Outcome, SurrogateConfig, SurrogateReport, approximate, check_on_mut
from .surrogate import run as run_surrogate

test_objective.__test__ = False

__version__ = "0.1.0"
