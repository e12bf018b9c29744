import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DATA_DIR = Path(os.getenv('MARKOVNET_DATA_DIR', 'data'))
OUTPUT_DIR = Path(os.getenv('MARKOVNET_OUTPUT_DIR', 'reports'))
LOG_DIR = Path(os.getenv('MARKOVNET_LOG_DIR', 'logs'))
LOG_LEVEL = os.getenv('MARKOVNET_LOG_LEVEL', 'INFO').upper()

# Progress bars for generation and training loops
SHOW_PROGRESS = os.getenv('MARKOVNET_PROGRESS', '1') not in ('0', 'false', 'False')

DATABASE_URL = os.getenv('DATABASE_URL', 'sqlite:///markovnet_runs.db')
DEFAULT_SEED = int(os.getenv('MARKOVNET_SEED', '2021'))
