# --------------------------------------------------------
# utilitary functions for decohere
# --------------------------------------------------------
import os
import builtins
import datetime

import numpy as np


class NumericalError(RuntimeError):
    """ Raised when a matrix breaks a density-matrix invariant or a computation cannot be carried out
        numerically (zero-norm projection, inconsistent measure routes, ...)
    """


def mkdir_for(f):
    os.makedirs(os.path.dirname(f) or '.', exist_ok=True)
    return f


def nats_to_bits(x):
    return x / np.log(2)


def default_seed(fallback=0):
    # CLI > env:DECOHERE_SEED > fallback
    return int(os.getenv('DECOHERE_SEED', fallback))


def set_print_with_timestamp(time_format="%Y-%m-%d %H:%M:%S"):
    builtin_print = builtins.print
    if getattr(builtin_print, '_with_timestamp', False):
        return

    def print_with_timestamp(*args, **kwargs):
        now = datetime.datetime.now()
        builtin_print(f'[{now.strftime(time_format)}] ', end='', file=kwargs.get('file'))
        builtin_print(*args, **kwargs)
    print_with_timestamp._with_timestamp = True
    builtins.print = print_with_timestamp


def read_config_file(path):
    """ flat `key = value` file, `#` starts a comment. Keys are returned with '-' replaced by '_'.
    """
    values = {}
    with open(path, 'r') as fid:
        for lineno, line in enumerate(fid, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ValueError(f'{path}:{lineno}: expected `key = value`, got {line!r}')
            key, value = (s.strip() for s in line.split('=', 1))
            if not key:
                raise ValueError(f'{path}:{lineno}: empty key')
            values[key.lstrip('-').replace('-', '_')] = value
    return values
