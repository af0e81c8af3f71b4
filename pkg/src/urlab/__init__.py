"""A software laboratory for real-time reinforcement learning on a simulated UR5.

Modules, bottom-up: ``timebase`` (clocks and the event scheduler),
``ursim`` (the 8 ms controller), ``linksim`` (wire formats and delay
models), ``reacher`` (the task), ``trpo`` (the learner), ``harness`` (the
concurrent sensor/actuator/environment/agent model) and ``xlab`` (configs,
analyses, CLI).
"""

__version__ = "0.1.0"
