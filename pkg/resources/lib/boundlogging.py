# -*- coding: utf-8 -*-
#
# Root logging configuration for the command line entry point.
#
import logging

LOG_FORMAT = '%(asctime)s %(module)s %(levelname)s: %(message)s'
LOG_DATEFMT = '%m/%d/%Y %I:%M:%S %p'


def config(level=logging.WARNING):
    root = logging.getLogger()
    # Re-running config() only changes the level.
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        root.addHandler(handler)
    root.setLevel(level)
