import logging
import os

from utils.settings import LOG_DIR, LOG_LEVEL


def setup_logger(name):
    """Setup logger with console and file handlers"""

    os.makedirs(LOG_DIR, exist_ok=True)

    logger = logging.getLogger(name)
    logger.setLevel(LOG_LEVEL)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(LOG_LEVEL)

    file_handler = logging.FileHandler(LOG_DIR / 'app.log')
    file_handler.setLevel(LOG_LEVEL)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    console_handler.setFormatter(formatter)
    file_handler.setFormatter(formatter)

    # Avoid duplicate handlers when a module is imported twice
    if not logger.handlers:
        logger.addHandler(console_handler)
        logger.addHandler(file_handler)

    return logger
