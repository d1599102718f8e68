from .config import LabSettings, get_settings, load_config
from .errors import *  # noqa: F401,F403
from .log import configure_logging
from .system import detect_system_capabilities, determine_run_profile
