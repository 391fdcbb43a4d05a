from scarlet_kit.main import main

main()
