"""Process-level settings for scarlet_kit."""

import os
from pathlib import Path

# Output directory fallback used when neither --out nor the config names one
OUTPUT_DIR = Path(os.getenv('SCARLET_KIT_OUT', 'runs'))

# Worker threads for embarrassingly parallel stages (1 keeps runs fully deterministic)
DEFAULT_WORKERS = int(os.getenv('SCARLET_KIT_WORKERS', 1))

# Progress bars on long loops
SHOW_PROGRESS = os.getenv('SCARLET_KIT_PROGRESS', '1') not in ('0', 'false', 'False')

# Bundled configs
PACKAGE_DIR = Path(__file__).parent
SPACES_DIR = PACKAGE_DIR / "search_space" / "spaces"
DEFAULT_EXPERIMENT_CONFIG = PACKAGE_DIR / "experiment_config.json"

# Logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
