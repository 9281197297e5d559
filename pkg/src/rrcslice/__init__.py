"""RAN slicing with learned DRX configuration for IoT devices.

Modules: :mod:`~rrcslice.drx` (DRX state machine and metrics),
:mod:`~rrcslice.traffic` (Poisson traffic), :mod:`~rrcslice.rrc` (RRC
messages and procedures), :mod:`~rrcslice.slicing` (slice registry and
southbound commands), :mod:`~rrcslice.qlearn` (the controller),
:mod:`~rrcslice.sim` (event-driven harness) and :mod:`~rrcslice.cli`.
"""
from .drx import DrxMachine, DrxParams, PacketRecord, Phase, PowerProfile, WindowMetrics
from .errors import *  # noqa: F401,F403
from .qlearn import ACTIONS, ControllerConfig, DrxAction, DrxController, Hyper, Mode, QTable
from .rrc import Procedure, RatFlavor, RrcMessage
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import RunReport, replay_with_action, run
from .slicing import SliceRegistry
from .traffic import TrafficProfile, TrafficSchedule, generate_trace

__version__ = "0.1.0"
