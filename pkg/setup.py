from setuptools import setup, find_packages

description = """
pnest, online parameter estimation for closed-loop nonlinear systems with a projected Newton-type update.
It simulates linear, sigmoid-RNN and binary-probit systems under a Riccati feedback law with optional excitation,
identifies them online, checks the model-class conditions, and writes per-seed metrics, aggregates and SVG charts.
"""

setup(
    name='pnest',
    version='0.1.0',
    description=description,
    packages=find_packages(exclude=['tests']),
    package_data={'pnest': ['configs/*.json', 'scripts/*.sh']},
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'scipy',
        'fire',
        'dacite',
        'tqdm',
        'prettytable',
        'matplotlib',
    ],
    entry_points={
        'console_scripts': ['pnest=pnest.run:main'],
    },
)
