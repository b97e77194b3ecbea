"""Module to hold common config logic."""
import configparser
import logging

TOOL_VERSION = '1.0.0'
LIST_SEPARATOR = ','
PAIR_SEPARATOR = ':'


def get_config(config_path):
    """Get configparser object initialized from config path.

    Args:
        config_path: str file path to config.
    Returns:
        configparser.ConfigParser initialized from config_path.
    Raises:
        FileNotFoundError if config_path does not exist.
    """
    config = configparser.ConfigParser()
    read_ok = config.read(config_path)
    if not read_ok:
        raise FileNotFoundError('Unable to read config file %s' % config_path)
    return config


def write_config(config, config_path):
    with open(config_path, 'w') as config_file:
        config.write(config_file)
    logging.debug('Wrote config to %s', config_path)


def format_float(value):
    """Shortest text that parses back to exactly the same float."""
    return repr(float(value))


def format_float_list(values):
    return LIST_SEPARATOR.join(format_float(v) for v in values)


def parse_float_list(text):
    """Parse comma separated floats. Empty string gives an empty list."""
    text = text.strip()
    if not text:
        return []
    return [float(token) for token in text.split(LIST_SEPARATOR)]


def format_pairs(pairs):
    """Format [(a, b), ...] as 'a:b,c:d'."""
    return LIST_SEPARATOR.join(
        '%s%s%s' % (format_float(first), PAIR_SEPARATOR, format_float(second))
        for first, second in pairs)


def parse_pairs(text):
    """Parse 'a:b,c:d' into [(a, b), (c, d)] of floats.

    Raises:
        ValueError if a token is not a pair of numbers.
    """
    pairs = []
    text = text.strip()
    if not text:
        return pairs
    for token in text.split(LIST_SEPARATOR):
        first, second = token.split(PAIR_SEPARATOR)
        pairs.append((float(first), float(second)))
    return pairs


def configure_logger(log_filename, level=logging.INFO):
    """Configure root logger to write to log_filename and STDOUT.

    Args:
      log_filename: str, filename to be used for log file.
      level: logging level for the root logger.
    """
    record_format = (
        '[%(levelname)s\t%(asctime)s] %(process)d %(thread)d {%(filename)s:%(lineno)d} '
        '%(message)s')
    logging.basicConfig(
        handlers=[logging.FileHandler(log_filename),
                  logging.StreamHandler()],
        format=record_format,
        level=level)
