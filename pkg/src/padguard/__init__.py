"""Safe landing for a UAV over a pad watched by an upward-looking fisheye camera.

Modules: ``geometry`` (pixel to world localization), ``distance`` (GBDT
distance regressor), ``landing`` (constrained landing point selection),
``mission`` (flight mode state machine), ``messaging`` (detection wire
format and transports), ``camera``/``world``/``simulate`` (closed-loop
simulator), ``metrics`` and ``cli``.
"""

__version__ = "0.1.0"
