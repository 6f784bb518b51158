"""
Bundled experiment presets, one per reproduced result
Values use the same keys and string syntax as experiment config files.
"""

import os

import config

LC_AXIS = '1,2,5,10,20,50,100,200,500'

PRESETS = {
    'fig2-movielens': {
        'mode': 'simulate',
        'trace': os.path.join(config.DATA_DIR, 'u.data'),
        'Lc': '20',
        'Nc': '1',
        'eps': '0.01',
        'rounds': '10',
        'policy': 'empirical',
    },
    'fig2-synthetic': {
        'mode': 'simulate',
        'N': '1000',
        'M': '100000',
        'alpha': '0.7',
        'n_requests': '10000000',
        'Lc': '20',
        'Nc': '1',
        'eps': '1e-4',
        'rounds': '1',
        'policy': 'analytic',
    },
    'fig3': {
        'mode': 'rate',
        'N': '1000',
        'M': '1000',
        'Lc': '100',
        'alpha': '0.7',
        'eps': '1e-3',
    },
    'fig4': {
        'mode': 'sweep',
        'M': '1000',
        'alpha': '0.3',
        'eps': '1e-4',
        'sweep_axis': 'Lc',
        'sweep_values': LC_AXIS,
    },
    'fig6-left': {
        'mode': 'sweep',
        'N': '1000',
        'M': '1000000',
        'Lc': '100',
        'B': '100000',
        'alpha': '0.7',
        'eps': '1e-4',
        'copies_rule': 'log2',
        'sweep_axis': 'Nc',
        'sweep_values': '1,2,5,10,20,50,100',
    },
    'fig6-right': {
        'mode': 'sweep',
        'N': '1000',
        'M': '1000000',
        'Nc': '10',
        'Ncopies': '1',
        'B': '100000',
        'alpha': '0.7',
        'eps': '1e-4',
        'sweep_axis': 'Lc',
        'sweep_values': '10,20,50,100,200,500,1000',
    },
    'fig7': {
        'mode': 'sweep',
        'N': '1000',
        'M': '10000',
        'B': '100000',
        'alpha': '0.7',
        'eps': '1e-4',
        'total_storage': '5000',
        'sweep_axis': 'Nc',
        'sweep_values': '1,2,5,10,25,50',
    },
    'fig8': {
        'mode': 'optimize',
        'N': '1000',
        'M': '10000',
        'B': '100000',
        'alpha': '0.7',
        'Nc': '50',
        'Lc': '10',
        'eps': '1e-4',
        'xi_up': '1',
        'xi_int': '1',
        'xi_ext': '5',
    },
}


def preset_names():
    return sorted(PRESETS)


def get_preset(name):
    """Copy of a preset's key/value pairs; KeyError for unknown names"""
    return dict(PRESETS[name])
