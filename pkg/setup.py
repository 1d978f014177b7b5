import setuptools

setuptools.setup(
    name='daie',
    version=eval(open('daie/_version.py').read().strip().split('=')[1]),
    license='MIT',
    description='Deontic active-inference ethics: norm-filtered global expected free energy for multi-stakeholder '
                'decisions.',
    install_requires=[
      'numpy',
      'scipy',
      'pandas',
      'tqdm',
      'lark>=1.1',
      'tomli-w'
    ],
    extras_require={
      'test': ['pytest', 'hypothesis']
    },
    packages=setuptools.find_packages(exclude=['tests']),
    package_data={'daie': ['data/*.toml', 'data/*.norms']},
    entry_points={'console_scripts': ['daie=daie.commands.daie_cli:main']},
    python_requires='>=3.11'
)
