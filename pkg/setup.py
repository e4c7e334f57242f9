from setuptools import setup, find_packages

with open('requirements.txt') as f:
    required = [line for line in f.read().splitlines() if line and not line.startswith('pytest')]

setup(
    name='gaptv',
    version='0.1.0',
    description='Piecewise-constant 2D regression: gap-statistic grid selection with total-variation denoising.',
    author='GapTV developers',
    packages=find_packages(exclude=['examples', 'examples.*']),
    include_package_data=True,
    install_requires=required,
    entry_points={
        'console_scripts': [
            'gaptv=CLI.gaptv_cli:main',
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.10',
)
