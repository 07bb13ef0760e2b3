# -*- coding: utf-8 -*-
#
# Exceptions raised by the bound library and the status dictionary used to
# report per-check outcomes without raising.
#
from __future__ import annotations

from typing import Optional


class BoundError(Exception):
    pass


class PreconditionError(BoundError, ValueError):

    def __init__(self, msg: str, index: Optional[int] = None):
        self.index = index
        if index is not None:
            msg = f'{msg} (index {index})'
        super(PreconditionError, self).__init__(msg)


class DegenerateGramError(BoundError):
    pass


class SizeGuardError(BoundError):
    pass


class ModelSpecError(BoundError):

    def __init__(self, msg: str, path: str = '$'):
        self.path = path
        super(ModelSpecError, self).__init__(f'{path}: {msg}')


class WeightSpecError(BoundError):
    pass


def new_status_dic(msg: str) -> dict:
    return {'status': True, 'msg': msg}


def fail_status(status_dic: dict, msg: str):
    status_dic['status'] = False
    status_dic['msg'] = f"{status_dic['msg']}: {msg}"
