import logging
import os

from pythonjsonlogger import jsonlogger

from lib.errors import ConfigurationError

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: str = None, log_format: str = None) -> logging.Logger:
    """
    Configure root logging from OEDSEL_LOG_LEVEL / OEDSEL_LOG_FORMAT.

    Returns the service logger named by OEDSEL_SERVICE_NAME.
    """
    level = (level or os.getenv('OEDSEL_LOG_LEVEL', 'INFO')).upper()
    log_format = (log_format or os.getenv('OEDSEL_LOG_FORMAT', 'text')).lower()
    if not hasattr(logging, level):
        raise ConfigurationError(f"Unknown log level: {level}")

    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, force=True)
    if log_format == 'json':
        formatter = jsonlogger.JsonFormatter(LOG_FORMAT)
        for handler in logging.getLogger().handlers:
            handler.setFormatter(formatter)
    elif log_format != 'text':
        raise ConfigurationError(f"Unknown log format: {log_format}")

    return logging.getLogger(os.getenv('OEDSEL_SERVICE_NAME', 'oedsel'))
