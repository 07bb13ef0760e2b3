# -*- coding: utf-8 -*-
#
# Weighted Borel-Cantelli bounds: command line entry point
#
# --- Python standard library ---
import sys
import logging
import platform

# Local modules
from resources.lib import boundlogging, cli

boundlogging.config()
logger = logging.getLogger(__name__)

PROGRAM_VERSION = '1.0.0'


# ---------------------------------------------------------------------------------------------
# This is the program entry point.
# ---------------------------------------------------------------------------------------------
def run_program() -> int:
    # --- Some debug stuff for development ---
    logger.info(f'------------ Called {cli.PROGRAM} ------------')
    logger.info(f'version          "{PROGRAM_VERSION}"')
    logger.info(f'sys.platform     "{sys.platform}"')
    logger.info(f'python           "{platform.python_version()}"')

    for i in range(len(sys.argv)):
        logger.info(f'sys.argv[{i}] "{sys.argv[i]}"')

    exit_code = cli.run(sys.argv[1:])
    logger.debug(f'{cli.PROGRAM} -> exit {exit_code}')
    return exit_code


# ---------------------------------------------------------------------------------------------
# RUN
# ---------------------------------------------------------------------------------------------
if __name__ == '__main__':
    try:
        sys.exit(run_program())
    except Exception as ex:
        logger.fatal('Exception in program', exc_info=ex)
        sys.exit(cli.EXIT_FAILURE)
