import os
from dotenv import load_dotenv


"""Load process-level settings from .env (per-run settings live in cli/run_config.py)"""


load_dotenv()


class Config:
    LOG_DIR = os.getenv("MPFLOW_LOG_DIR", "log")
    LOG_LEVEL = os.getenv("MPFLOW_LOG_LEVEL", "INFO")
    # artifact registry; sqlite file next to the logs unless overridden
    REGISTRY_URL = os.getenv(
        "MPFLOW_REGISTRY_URL",
        f"sqlite:///{os.path.join(os.getenv('MPFLOW_LOG_DIR', 'log'), 'registry.db')}",
    )
    THREADS = int(os.getenv("MPFLOW_THREADS", "1"))


config_ = Config()
